"""Desk-scale simulator for passive magnetically coupled resonant-tag sensing
and tangible musical control: coil/tag physics, swept-frequency and ringdown
readers, 30 Hz multi-tag tracking, pose estimation, and MIDI mapping."""

__version__ = "0.1.0"

from .mapping import EventKind, MappingConfig, MusicEvent
from .scene import Scene, load_bundled, load_scene
from .sweepchain import SpectrumFrame, SweepConfig
from .tagphys import CoilSpec, FieldModel, ObjectSpec, Pose, TagKind, TagSpec

__all__ = [
    "CoilSpec", "EventKind", "FieldModel", "MappingConfig", "MusicEvent",
    "ObjectSpec", "Pose", "Scene", "SpectrumFrame", "SweepConfig", "TagKind",
    "TagSpec", "load_bundled", "load_scene", "__version__",
]
