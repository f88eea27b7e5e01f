# Which view matters?  Retrain with each view removed.  View 4 is the only
# view of its planted group, so losing it loses that group's information.

from hotmvl import SynthSpec, TrainConfig, generate_synthetic
from hotmvl.eval import run_ablation

ds = generate_synthetic(SynthSpec(assignment=(0, 0, 1, 1, 2), seed=3))
report = run_ablation(ds, TrainConfig(seed=3), seeds=[300])
for row in report.rows:
    print(f"{row['removed']:>6}  {row['mean']:.3f}")
print("most damaging removal:", report.most_damaging())
