"""Extended RAIM across positioning infrastructures.

Ranging data from GNSS, Wi-Fi, cellular, Bluetooth and GeoIP anchors is
split into anchor subsets, each subset is solved for a position, the
positions are smoothed against motion-sensor propagation, and the spread of
the subsets around the reported position yields an attack likelihood.
Inconsistent subsets are excluded to recover a benign position.
"""

from .errors import (ConvergenceError, EraimError, FormatError, InsufficientDataError, InvalidArgumentError,
                     NoDataError, RowError, SingularGeometryError)
from .fusion import DetectionReport
from .model import AnchorRegistry, Epoch, GeoPoint, Infrastructure
from .pipeline import Detector, DetectorConfig
from .simulate import AttackKind, ScenarioConfig, build_scenario
from .theory import InfraCounts

__version__ = "0.1.0"

__all__ = [
    "AnchorRegistry", "AttackKind", "ConvergenceError", "DetectionReport", "Detector", "DetectorConfig",
    "Epoch", "EraimError", "FormatError", "GeoPoint", "Infrastructure", "InfraCounts", "InsufficientDataError",
    "InvalidArgumentError", "NoDataError", "RowError", "ScenarioConfig", "SingularGeometryError",
    "build_scenario", "__version__",
]
