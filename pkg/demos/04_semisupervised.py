# Semi-supervised classification with 5% aligned labels.  The rest of the
# training rows are shuffled independently per view and only reach the model
# through the unsupervised regularizer.

from hotmvl import SplitSpec, SynthSpec, TrainConfig, generate_synthetic, split_and_unalign
from hotmvl.eval import accuracy
from hotmvl.train import predict, train_semisupervised

ds = generate_synthetic(SynthSpec(seed=1))
split = split_and_unalign(ds, SplitSpec(seed=1))
print(f"labeled {split.train_labeled_aligned.n_samples}, unlabeled {split.train_unlabeled.n_samples}, "
      f"test {split.test.n_samples}")

arms = {
    "cross-entropy only": TrainConfig(gamma=0.0, tau=0.0, seed=1),
    "hot_reference": TrainConfig(seed=1),
    "hot_reference + AE": TrainConfig(use_autoencoder=True, seed=1),
    "sw_pairwise": TrainConfig(regularizer="sw_pairwise", seed=1),
}
for name, config in arms.items():
    model, report = train_semisupervised(split, config)
    acc = accuracy(predict(model, split.test.views), split.test.labels)
    print(f"{name:<20} test accuracy {acc:.3f}  (best epoch {report.best_epoch})")
