"""Reference-free estimation of STOI, PESQ and SI-SDR with a from-scratch numpy network."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .metrics import MetricTriple, evaluate, mae, pcc, si_sdr, srcc, stoi
from .model import ModelConfig, SquimObjective, init_params, model_forward
from .signal import Waveform, load_wav, mix_at_snr, resample, save_wav, synth_signal
from .train import LossWeights, TrainConfig, evaluate_model, synth_dataset, total_loss

__all__ = [
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "MetricTriple", "evaluate", "mae", "pcc", "si_sdr", "srcc", "stoi",
    "ModelConfig", "SquimObjective", "init_params", "model_forward",
    "Waveform", "load_wav", "mix_at_snr", "resample", "save_wav", "synth_signal",
    "LossWeights", "TrainConfig", "evaluate_model", "synth_dataset", "total_loss",
]
