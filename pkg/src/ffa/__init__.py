"""Forward-Forward training in two equivalent forms.

An analog trainer (dense ReLU layer, exact layer-local gradients, ADAM) and
a spiking trainer (LIF neurons, output traces, three-factor Hebbian updates
through eligibility traces) built around the same goodness/probability
machinery, so their update rules can be compared factor by factor.
"""

from .analog import (
    AdamState,
    DenseLayer,
    EpochStats,
    TrainConfig,
    adam_step,
    forward,
    forward_batch,
    layer_gradient,
    train_analog,
)
from .core import (
    Polarity,
    PolarityPartition,
    SigmoidProb,
    SymmetricProb,
    bce_loss,
    goodness,
    modulation_sigmoid,
    modulation_symmetric,
    prob_sigmoid,
    prob_symmetric,
)
from .data import (
    ContrastiveSample,
    Dataset,
    ExperimentData,
    LabelCodebook,
    batches,
    embed,
    load_mnist,
    make_negative,
    make_positive,
)
from .errors import CheckpointError, ConfigError, DataError, DivergenceError, FFAError
from .metrics import (
    LatentDump,
    MetricReport,
    accuracy,
    classify,
    export_latents,
    hoyer_index,
    separability_index,
)
from .spiking import (
    EligibilityTrace,
    LIFConfig,
    LIFState,
    OutputTrace,
    SpikeEncoderConfig,
    SpikingConfig,
    SpikingModel,
    TraceConfig,
    eligibility_step,
    hebbian_impulse,
    lif_step,
    rate_encode,
    run_sample,
    trace_step,
    train_hebbian,
)

__version__ = "0.1.0"
