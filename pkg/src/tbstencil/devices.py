"""GPU device profiles used by the performance model and the tuner."""

import json
from dataclasses import asdict, dataclass, field

from .errors import ConfigError


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    peak_comp: dict          # GFLOP/s per dtype ("f32", "f64")
    peak_gm: dict            # GB/s, measured
    peak_sm: dict            # GB/s, measured
    n_SM: int
    smem_per_SM: int         # bytes
    max_threads_per_SM: int = 2048
    max_threads_per_block: int = 1024
    max_regs_per_thread: int = 255
    regs_per_SM: int = 65536
    peak_gm_theoretical: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        try:
            prof = cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad device profile: {exc}") from None
        for key in ("peak_comp", "peak_gm", "peak_sm"):
            table = getattr(prof, key)
            if set(table) < {"f32", "f64"}:
                raise ConfigError(f"device profile field '{key}' needs f32 and f64 entries")
        return prof


V100 = DeviceProfile(
    name="v100",
    peak_comp={"f32": 15700.0, "f64": 7850.0},
    peak_gm={"f32": 791.0, "f64": 805.0},
    peak_sm={"f32": 10650.0, "f64": 12750.0},
    n_SM=80,
    smem_per_SM=96 * 1024,
    peak_gm_theoretical={"f32": 900.0, "f64": 900.0},
)

P100 = DeviceProfile(
    name="p100",
    peak_comp={"f32": 10600.0, "f64": 5300.0},
    peak_gm={"f32": 535.0, "f64": 540.0},
    peak_sm={"f32": 9700.0, "f64": 10150.0},
    n_SM=56,
    smem_per_SM=64 * 1024,
    peak_gm_theoretical={"f32": 720.0, "f64": 720.0},
)

BUILTIN = {"v100": V100, "p100": P100}


def get_device(name_or_path):
    """Built-in profile by name, or a JSON profile file."""
    key = str(name_or_path).lower()
    if key in BUILTIN:
        return BUILTIN[key]
    try:
        with open(name_or_path) as fh:
            return DeviceProfile.from_dict(json.load(fh))
    except FileNotFoundError:
        raise ConfigError(f"unknown device '{name_or_path}' (built-ins: v100, p100; "
                          f"or a path to a JSON profile)") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name_or_path}: invalid JSON ({exc})") from None
