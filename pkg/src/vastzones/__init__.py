"""Sound-zone control with variable span trade-off filters."""
from .eig import JointDiag, joint_diagonalize
from .room import RIRSet, RoomSpec, SceneGeometry, circular_scene, generate_rirs
from .signals import AudioSignal, Segmenter, convolve, sine_window
from .stats import SpatialStats, build_stats, build_uncontrolled
from .vast import ControlFilterBank, VastParams, closed_form_powers, solve_vast

__version__ = "0.1.0"
