"""LSTM grade prediction over course enrollment sequences, with prerequisite
inference and goal-based preparation-course recommendation."""
from .domain import Course, EnrollmentDataset, Grade, Semester, Vocabulary, build_vocabulary, parse_enrollment_csv
from .encode import MaskGroup, ModelKind, Threshold
from .net import Model, init_params
from .optim import TrainConfig, train
from .persist import load_model, save_model

__version__ = "0.1.0"
