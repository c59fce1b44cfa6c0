"""INI experiment configuration.

A config has five sections.  Angles are written in degrees and converted to
radians when the model is built; SNR stays in dB until use.

.. code-block:: ini

    [experiment]
    n_r = 1
    constellation = bpsk          ; bpsk | qpsk | qpsk_gray | ssk
    snr_db = 0, 5, 10, 15, 20
    max_trials = 1000000
    target_errors = 200
    seed = 0
    fading = per_symbol           ; per_symbol | fixed
    block_size = 10000
    threads = 1

    [channel]
    rays = 64
    wavelength = 1.0
    rx_spacing = 0.5              ; in wavelengths
    aod_theta = laplacian 45 17   ; mean, spread (deg)
    aod_phi = vonmises 0 4        ; mean (deg), concentration
    aoa_theta = laplacian 90 30
    aoa_phi = uniform             ; optional bounds in deg

    [patterns]
    element_spacing = 0.5         ; array pitch in wavelengths
    resolution_deg = 1.0
    gain_db = 0                   ; offset applied to every pattern
    p0 = excitation A
    p1 = excitation C rot=90 gain_db=-3
    p2 = matrix 0++0/0++0/0--0/0--0
    p3 = file patterns/horn.rp
    p4 = isotropic

    [analysis]
    kinds = exact, asymptotic
    rel_tol = 1e-3

    [optimize]
    choose = 4
    ranking_snr_db = 30
    kind = asymptotic

Angle laws: ``laplacian MEAN SPREAD``, ``gaussian MEAN SPREAD``,
``vonmises MEAN KAPPA``, ``uniform [LO HI]`` and ``fixed ANGLE``.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .analysis import BOUND_KINDS, AnalysisSettings
from .channel import (
    AngularDistribution,
    ChannelModel,
    Fixed,
    TruncatedGaussian,
    TruncatedLaplacian,
    Uniform,
    VonMises,
)
from .modem import constellation_by_name
from .montecarlo import FADING_MODES, SmConfig
from .patterns import EXCITATIONS, Codebook, ExcitationMatrix, isotropic, load_pattern, synth_array_pattern

SECTIONS = ("experiment", "channel", "patterns", "analysis", "optimize")


class ConfigError(ValueError):
    """Invalid config; the message names the section, key and line."""


@dataclass(frozen=True)
class AngleLaw:
    kind: str
    params: tuple[float, ...] = ()

    _ARITY = {"laplacian": (2,), "gaussian": (2,), "vonmises": (2,), "uniform": (0, 2), "fixed": (1,)}

    def __post_init__(self):
        if self.kind not in self._ARITY:
            raise ValueError(f"unknown angle law {self.kind!r}; choose from {sorted(self._ARITY)}")
        if len(self.params) not in self._ARITY[self.kind]:
            raise ValueError(f"{self.kind} takes {' or '.join(map(str, self._ARITY[self.kind]))} numbers")

    @classmethod
    def parse(cls, text: str) -> "AngleLaw":
        parts = text.split()
        if not parts:
            raise ValueError("empty angle law")
        return cls(parts[0].lower(), tuple(float(x) for x in parts[1:]))

    def format(self) -> str:
        return " ".join([self.kind, *(repr(x) for x in self.params)])

    def build(self, elevation: bool) -> AngularDistribution:
        r = [math.radians(x) for x in self.params]
        if self.kind == "laplacian":
            return TruncatedLaplacian(r[0], r[1])
        if self.kind == "gaussian":
            return TruncatedGaussian(r[0], r[1])
        if self.kind == "vonmises":
            return VonMises(r[0], self.params[1])
        if self.kind == "fixed":
            return Fixed(r[0])
        if r:
            return Uniform(r[0], r[1])
        return Uniform(0.0, math.pi) if elevation else Uniform()


@dataclass(frozen=True)
class PatternSpec:
    """One codebook entry: a source plus optional rotation and gain offset."""

    source: str  # excitation | matrix | file | isotropic
    arg: str = ""
    rotation_deg: int = 0
    gain_db: float = 0.0

    def __post_init__(self):
        if self.source not in ("excitation", "matrix", "file", "isotropic"):
            raise ValueError(f"unknown pattern source {self.source!r}")
        if self.rotation_deg % 90:
            raise ValueError("rotation must be a multiple of 90 degrees")
        if self.source == "excitation" and self.arg not in EXCITATIONS:
            raise ValueError(f"unknown excitation {self.arg!r}; choose from {sorted(EXCITATIONS)}")
        if self.rotation_deg and self.source not in ("excitation", "matrix"):
            raise ValueError("rotation applies to excitation matrices only")

    @classmethod
    def parse(cls, text: str) -> "PatternSpec":
        parts = text.split()
        if not parts:
            raise ValueError("empty pattern entry")
        source, rest = parts[0].lower(), parts[1:]
        opts = {}
        while rest and "=" in rest[-1]:
            k, v = rest.pop().split("=", 1)
            opts[k] = v
        unknown = set(opts) - {"rot", "gain_db"}
        if unknown:
            raise ValueError(f"unknown pattern option(s) {sorted(unknown)}")
        if source == "isotropic":
            if rest:
                raise ValueError("isotropic takes no argument")
            arg = ""
        else:
            if len(rest) != 1:
                raise ValueError(f"{source} takes exactly one argument")
            arg = rest[0]
        return cls(source, arg, int(opts.get("rot", 0)), float(opts.get("gain_db", 0.0)))

    def format(self) -> str:
        out = [self.source] + ([self.arg] if self.arg else [])
        if self.rotation_deg:
            out.append(f"rot={self.rotation_deg}")
        if self.gain_db:
            out.append(f"gain_db={self.gain_db!r}")
        return " ".join(out)

    def excitation(self) -> ExcitationMatrix:
        if self.source == "excitation":
            ex = EXCITATIONS[self.arg]
        else:
            ex = ExcitationMatrix(_parse_matrix_arg(self.arg), self.arg)
        return ex.rotated(self.rotation_deg // 90)


def _parse_matrix_arg(arg: str) -> np.ndarray:
    rows = arg.split("/")
    sym = {"+": 1, "-": -1, "0": 0}
    if len(rows) != 4 or any(len(r) != 4 or set(r) - set(sym) for r in rows):
        raise ValueError("matrix must be four '/'-separated rows of four characters from '+-0'")
    return np.array([[sym[c] for c in r] for r in rows])


@dataclass(frozen=True)
class ExperimentConfig:
    # experiment
    n_r: int = 1
    constellation: str = "bpsk"
    snr_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    max_trials: int = 1_000_000
    target_errors: int = 200
    seed: int = 0
    fading: str = "per_symbol"
    block_size: int = 10_000
    threads: int = 1
    # channel
    rays: int = 64
    wavelength: float = 1.0
    rx_spacing: float = 0.5
    aod_theta: AngleLaw = AngleLaw("laplacian", (90.0, 30.0))
    aod_phi: AngleLaw = AngleLaw("uniform")
    aoa_theta: AngleLaw = AngleLaw("laplacian", (90.0, 30.0))
    aoa_phi: AngleLaw = AngleLaw("uniform")
    # patterns
    element_spacing: float = 0.5
    resolution_deg: float = 1.0
    gain_db: float = 0.0
    patterns: tuple[PatternSpec, ...] = ()
    # analysis
    kinds: tuple[str, ...] = ()
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    # optimize
    choose: int = 0
    ranking_snr_db: float = 30.0
    ranking_kind: str = "asymptotic"
    base_dir: Path = field(default=Path("."), compare=False)

    @cached_property
    def model(self) -> ChannelModel:
        return ChannelModel(
            self.rays,
            self.wavelength,
            self.aod_theta.build(True),
            self.aod_phi.build(False),
            self.aoa_theta.build(True),
            self.aoa_phi.build(False),
            self.rx_spacing * self.wavelength,
        )

    @cached_property
    def pattern_pool(self) -> Codebook:
        pats = []
        for i, spec in enumerate(self.patterns):
            if spec.source == "isotropic":
                rp = isotropic(label=f"p{i}")
            elif spec.source == "file":
                path = Path(spec.arg)
                rp = load_pattern(path if path.is_absolute() else self.base_dir / path)
            else:
                rp = synth_array_pattern(spec.excitation(), self.element_spacing, self.resolution_deg)
            pats.append(rp.scaled(self.gain_db + spec.gain_db))
        return Codebook(tuple(pats))

    @property
    def bound_kinds(self) -> tuple[str, ...]:
        if self.kinds:
            return self.kinds
        return BOUND_KINDS if self.n_r == 1 else ("asymptotic",)

    def sm_config(self, codebook: Codebook | None = None, **overrides) -> SmConfig:
        args = dict(
            codebook=codebook if codebook is not None else self.pattern_pool,
            model=self.model,
            n_r=self.n_r,
            constellation=constellation_by_name(self.constellation),
            snr_grid_db=self.snr_db,
            max_trials=self.max_trials,
            target_errors=self.target_errors,
            seed=self.seed,
            fading=self.fading,
            block_size=self.block_size,
            threads=self.threads,
        )
        args.update(overrides)
        return SmConfig(**args)

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


# -- parsing -------------------------------------------------------------------

_INT = int
_FLOAT = float


def _floats(text: str) -> tuple[float, ...]:
    vals = tuple(float(x) for x in re.split(r"[,\s]+", text.strip()) if x)
    if not vals:
        raise ValueError("expected at least one number")
    return vals


def _words(text: str) -> tuple[str, ...]:
    return tuple(x for x in re.split(r"[,\s]+", text.strip().lower()) if x)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


# section -> key -> (field name, converter)
_SCHEMA = {
    "experiment": {
        "n_r": ("n_r", _INT),
        "constellation": ("constellation", str.strip),
        "snr_db": ("snr_db", _floats),
        "max_trials": ("max_trials", _INT),
        "target_errors": ("target_errors", _INT),
        "seed": ("seed", _INT),
        "fading": ("fading", str.strip),
        "block_size": ("block_size", _INT),
        "threads": ("threads", _INT),
    },
    "channel": {
        "rays": ("rays", _INT),
        "wavelength": ("wavelength", _FLOAT),
        "rx_spacing": ("rx_spacing", _FLOAT),
        "aod_theta": ("aod_theta", AngleLaw.parse),
        "aod_phi": ("aod_phi", AngleLaw.parse),
        "aoa_theta": ("aoa_theta", AngleLaw.parse),
        "aoa_phi": ("aoa_phi", AngleLaw.parse),
    },
    "patterns": {
        "element_spacing": ("element_spacing", _FLOAT),
        "resolution_deg": ("resolution_deg", _FLOAT),
        "gain_db": ("gain_db", _FLOAT),
    },
    "analysis": {
        "kinds": ("kinds", _words),
        "quad_theta_nodes": ("quad_theta_nodes", _INT),
        "quad_phi_nodes": ("quad_phi_nodes", _INT),
        "quad_craig_nodes": ("quad_craig_nodes", _INT),
        "quad_z_nodes": ("quad_z_nodes", _INT),
        "z_cutoff": ("z_cutoff", _FLOAT),
        "rel_tol": ("rel_tol", _FLOAT),
        "check_convergence": ("check_convergence", _bool),
    },
    "optimize": {
        "choose": ("choose", _INT),
        "ranking_snr_db": ("ranking_snr_db", _FLOAT),
        "kind": ("ranking_kind", lambda s: s.strip().lower()),
    },
}
_PATTERN_KEY = re.compile(r"^p(\d+)$")
_ANALYSIS_FIELDS = {f.name for f in fields(AnalysisSettings)}


def _line_index(text: str) -> dict[tuple[str, str], int]:
    index = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            index[(section, "")] = lineno
            continue
        m = re.match(r"^([^=:;#\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            index[(section, m.group(1).strip().lower())] = lineno
    return index


def parse_config_text(text: str, base_dir: Path | str = ".", source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    lines = _line_index(text)

    def where(section, key=""):
        line = lines.get((section, key))
        loc = f"[{section}] {key}".rstrip()
        return f"{source}:{line}: {loc}" if line else f"{source}: {loc}"

    values: dict = {}
    analysis: dict = {}
    patterns: list[tuple[int, PatternSpec]] = []
    for section in parser.sections():
        sec = section.lower()
        if sec not in _SCHEMA:
            raise ConfigError(f"{where(section)}: unknown section; expected one of {', '.join(SECTIONS)}")
        for key, raw in parser.items(section):
            target = _SCHEMA[sec].get(key)
            try:
                if sec == "patterns" and target is None and _PATTERN_KEY.match(key):
                    patterns.append((int(_PATTERN_KEY.match(key).group(1)), PatternSpec.parse(raw)))
                    continue
                if target is None:
                    raise ValueError(f"unknown key; expected one of {', '.join(_SCHEMA[sec])}")
                name, conv = target
                val = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{where(sec, key)}: {exc}") from None
            (analysis if name in _ANALYSIS_FIELDS else values)[name] = val

    patterns.sort(key=lambda t: t[0])
    if [i for i, _ in patterns] != list(range(len(patterns))):
        raise ConfigError(f"{where('patterns')}: pattern keys must be p0, p1, ... without gaps")
    values["patterns"] = tuple(spec for _, spec in patterns)
    try:
        values["analysis"] = AnalysisSettings(**analysis)
    except ValueError as exc:
        raise ConfigError(f"{where('analysis')}: {exc}") from None
    cfg = ExperimentConfig(**values, base_dir=Path(base_dir))
    _validate(cfg, where)
    return cfg


def _validate(cfg: ExperimentConfig, where) -> None:
    def check(ok, section, key, msg):
        if not ok:
            raise ConfigError(f"{where(section, key)}: {msg}")

    check(cfg.n_r >= 1, "experiment", "n_r", f"must be >= 1, got {cfg.n_r}")
    try:
        constellation_by_name(cfg.constellation)
    except ValueError as exc:
        check(False, "experiment", "constellation", str(exc))
    check(cfg.fading in FADING_MODES, "experiment", "fading", f"must be one of {FADING_MODES}")
    for key in ("max_trials", "target_errors", "block_size", "threads"):
        check(getattr(cfg, key) >= 1, "experiment", key, f"must be >= 1, got {getattr(cfg, key)}")
    check(cfg.seed >= 0, "experiment", "seed", "must be non-negative")
    check(cfg.rays >= 1, "channel", "rays", f"must be >= 1, got {cfg.rays}")
    check(cfg.wavelength > 0, "channel", "wavelength", "must be positive")
    check(cfg.rx_spacing >= 0, "channel", "rx_spacing", "must be non-negative")
    for key in ("aod_theta", "aod_phi", "aoa_theta", "aoa_phi"):
        try:
            getattr(cfg, key).build(key.endswith("theta"))
        except ValueError as exc:
            check(False, "channel", key, str(exc))
    check(cfg.element_spacing > 0, "patterns", "element_spacing", "must be positive")
    check(0 < cfg.resolution_deg <= 45, "patterns", "resolution_deg", "must lie in (0, 45]")
    check(len(cfg.patterns) >= 1, "patterns", "", "at least one pattern entry (p0 = ...) is required")
    for i, spec in enumerate(cfg.patterns):
        if spec.source == "file":
            path = Path(spec.arg)
            path = path if path.is_absolute() else cfg.base_dir / path
            check(path.is_file(), "patterns", f"p{i}", f"pattern file {str(path)!r} does not exist")
        elif spec.source == "matrix":
            try:
                spec.excitation()
            except ValueError as exc:
                check(False, "patterns", f"p{i}", str(exc))
    for kind in cfg.kinds:
        check(kind in BOUND_KINDS, "analysis", "kinds", f"unknown bound kind {kind!r}; choose from {BOUND_KINDS}")
    check(
        "exact" not in cfg.kinds or cfg.n_r == 1, "analysis", "kinds", "the exact kind covers n_r = 1 only"
    )
    check(cfg.ranking_kind in BOUND_KINDS, "optimize", "kind", f"unknown bound kind {cfg.ranking_kind!r}")
    check(
        cfg.ranking_kind != "exact" or cfg.n_r == 1, "optimize", "kind", "exact ranking needs n_r = 1"
    )
    k, pool = cfg.choose, len(cfg.patterns)
    check(k >= 0, "optimize", "choose", "must be non-negative")
    check(k <= pool, "optimize", "choose", f"choose = {k} exceeds the pattern pool size {pool}")
    check(k == 0 or k & (k - 1) == 0, "optimize", "choose", f"must be a power of two, got {k}")
    n_words = (k or pool) * constellation_by_name(cfg.constellation).M
    check(n_words >= 2, "patterns", "", "need at least two hypotheses (patterns x symbols)")


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    return parse_config_text(path.read_text(), base_dir=path.parent, source=str(path))


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical text that parses back to an equal config."""
    r = repr
    out = [
        "[experiment]",
        f"n_r = {cfg.n_r}",
        f"constellation = {cfg.constellation}",
        "snr_db = " + ", ".join(r(x) for x in cfg.snr_db),
        f"max_trials = {cfg.max_trials}",
        f"target_errors = {cfg.target_errors}",
        f"seed = {cfg.seed}",
        f"fading = {cfg.fading}",
        f"block_size = {cfg.block_size}",
        f"threads = {cfg.threads}",
        "",
        "[channel]",
        f"rays = {cfg.rays}",
        f"wavelength = {r(cfg.wavelength)}",
        f"rx_spacing = {r(cfg.rx_spacing)}",
        *(f"{k} = {getattr(cfg, k).format()}" for k in ("aod_theta", "aod_phi", "aoa_theta", "aoa_phi")),
        "",
        "[patterns]",
        f"element_spacing = {r(cfg.element_spacing)}",
        f"resolution_deg = {r(cfg.resolution_deg)}",
        f"gain_db = {r(cfg.gain_db)}",
        *(f"p{i} = {spec.format()}" for i, spec in enumerate(cfg.patterns)),
        "",
        "[analysis]",
    ]
    if cfg.kinds:
        out.append("kinds = " + ", ".join(cfg.kinds))
    for f in fields(AnalysisSettings):
        v = getattr(cfg.analysis, f.name)
        out.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else r(v)}")
    out += [
        "",
        "[optimize]",
        f"choose = {cfg.choose}",
        f"ranking_snr_db = {r(cfg.ranking_snr_db)}",
        f"kind = {cfg.ranking_kind}",
        "",
    ]
    return "\n".join(out)
