"""Neural codes of ReLU MLPs treated as hash codes."""

from .codes import (
    CodeTable,
    LayerMask,
    NeuralCode,
    NeuralCodeEncoder,
    build_code_table,
    code_matrix,
    encode,
    encode_batch,
    hamming,
    restrict,
)
from .data import (
    Dataset,
    inject_label_noise,
    load_cifar10_bin,
    load_mnist_idx,
    random_ball,
    random_pixels,
    subsample,
)
from .geometry import avg_stochastic_diameter, region_interval, sample_direction
from .harness import SweepConfig, label_regime, report, run_sweep
from .nn import (
    MlpModel,
    ReLUMLPClassifier,
    TrainConfig,
    forward,
    grad_check,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .probes import (
    CodeKMeansClassifier,
    CodeLogisticRegression,
    HammingKNNClassifier,
    kmeans_accuracy,
    knn_accuracy,
    logreg_accuracy,
    redundancy,
)

__version__ = "0.1.0"
