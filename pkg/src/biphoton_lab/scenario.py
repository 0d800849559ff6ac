"""Config-driven scenario runner: parses sectioned key = value files, runs
one experiment and writes images, tables, traces, masks and a manifest."""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import studies
from .biphoton import ObjectImage, OpticalConfig, SPDCParams, digit_eight
from .correlate import CorrelationImage
from .experiment import DeskSetup
from .fileio import ensure_dir, write_biph1, write_matrix_csv, write_pgm, write_pgm16_normalized
from .shapeopt import SIX_PHASES, OptConfig, identity_mask


class ConfigError(ValueError):
    """Invalid or unparsable scenario configuration (exit code 2)."""


class NumericError(RuntimeError):
    """Non-finite values in a result (exit code 3)."""


REQ = object()

SCHEMA = {
    "scenario": {"experiment": (str, REQ), "seed": (int, 0), "description": (str, "")},
    "grid": {"n": (int, 32), "pitch_um": (float, 50.0), "boundary": (str, "circular")},
    "spdc": {"lambda_p_nm": (float, 402.0), "sigma_r_um": (float, 13.0), "sigma_k_per_m": (float, 4.7e3),
             "profile": (str, "gaussian")},
    "optics": {"f0_mm": (float, 70.0), "f1_mm": (float, 35.0), "f2_mm": (float, 150.0), "f3_mm": (float, 200.0),
               "f4_mm": (float, 75.0), "f5_mm": (float, 125.0), "lambda_nm": (float, 804.0),
               "m_dprime": (float, 4.3)},
    "object": {"kind": (str, "digit8"), "path": (str, None), "threshold": (float, None)},
    "medium": {"kind": (str, "thin"), "corr_len_px": (float, 2.0), "envelope_sigma_px": (float, None),
               "seed": (int, None)},
    "slm": {"macro_n": (int, 16), "phase_steps": (int, 4)},
    "optimization": {"max_steps": (int, 1500), "phase_samples": (int, 7), "six_phases": (bool, False),
                     "feedback": (str, "analytic"), "plateau_window": (int, 200), "plateau_tol": (float, 1e-4),
                     "fraction": (float, 0.5), "bins": (int, 1), "pair_rate_hz": (float, 1e5),
                     "batch_s": (float, 3.0), "accidental_mean": (float, 5.0), "runs": (int, 10),
                     "sizes": (str, "8,16,32")},
    "events": {"pairs": (float, 1e5), "duration_s": (float, 10.0), "noise_rate_hz": (float, 1e5),
               "jitter_ns": (float, 1.0), "window_ns": (float, 6.0), "accidental_seeds": (int, 50)},
    "outputs": {"formats": (str, "pgm16,csv")},
}
REQUIRED_SECTIONS = ("scenario", "grid")

EXPERIMENTS = ("fig2", "fig3-opt", "fig4-media", "sm2-events", "sm5-tm", "sm9-sigma", "sm11-classical",
               "sm12-macropixels", "sm13-multiplicity", "sm14-diff-encoding", "restoration")


@dataclass
class ScenarioConfig:
    values: dict
    source: str = "<string>"

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["scenario"]["seed"]

    @property
    def experiment(self) -> str:
        return self.values["scenario"]["experiment"]


def _convert(kind, raw: str, where: str):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {kind.__name__}") from None


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                   strict=True, interpolation=None, default_section="__none__")
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    missing = [s for s in REQUIRED_SECTIONS if not cp.has_section(s)]
    if missing:
        raise ConfigError(f"{source}: missing required section(s): "
                          + ", ".join(f"[{s}]" for s in missing)
                          + "; required sections are " + ", ".join(f"[{s}]" for s in REQUIRED_SECTIONS))
    values = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]; known: {', '.join(SCHEMA)}")
    for sec, keys in SCHEMA.items():
        have = dict(cp.items(sec)) if cp.has_section(sec) else {}
        for k in have:
            if k not in keys:
                raise ConfigError(f"{source}: [{sec}] unknown key {k!r}; allowed: {', '.join(keys)}")
        out = {}
        for k, (kind, default) in keys.items():
            if k in have and have[k].strip() != "":
                out[k] = _convert(kind, have[k], f"{source}: [{sec}] {k}")
            elif default is REQ:
                raise ConfigError(f"{source}: [{sec}] {k} is required")
            else:
                out[k] = default
        values[sec] = out
    cfg = ScenarioConfig(values, source)
    _validate(cfg)
    return cfg


def _validate(cfg: ScenarioConfig):
    src = cfg.source
    exp = cfg.experiment
    if exp not in EXPERIMENTS:
        raise ConfigError(f"{src}: [scenario] experiment {exp!r} unknown; choose one of {', '.join(EXPERIMENTS)}")
    g = cfg["grid"]
    if g["n"] < 2 or g["pitch_um"] <= 0:
        raise ConfigError(f"{src}: [grid] needs n >= 2 and pitch_um > 0")
    if g["boundary"] not in ("circular", "linear"):
        raise ConfigError(f"{src}: [grid] boundary must be circular or linear")
    if cfg["medium"]["kind"] not in ("thin", "thick", "none", "random-phase", "thick-sim"):
        raise ConfigError(f"{src}: [medium] kind {cfg['medium']['kind']!r} unknown")
    if cfg["object"]["kind"] not in ("digit8", "pgm"):
        raise ConfigError(f"{src}: [object] kind must be digit8 or pgm")
    if cfg["object"]["kind"] == "pgm" and not cfg["object"]["path"]:
        raise ConfigError(f"{src}: [object] path is required for kind = pgm")
    o = cfg["optimization"]
    if o["feedback"] not in ("analytic", "sampled"):
        raise ConfigError(f"{src}: [optimization] feedback must be analytic or sampled")
    if o["phase_samples"] < 5:
        raise ConfigError(f"{src}: [optimization] phase_samples must be >= 5")
    if o["max_steps"] < 1:
        raise ConfigError(f"{src}: [optimization] max_steps must be >= 1")
    try:
        [int(s) for s in o["sizes"].split(",")]
    except ValueError:
        raise ConfigError(f"{src}: [optimization] sizes must be a comma list of integers") from None
    fm = [f.strip() for f in cfg["outputs"]["formats"].split(",")]
    if not fm or any(f not in ("pgm16", "csv") for f in fm):
        raise ConfigError(f"{src}: [outputs] formats must list pgm16 and/or csv")


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError:
        raise
    return parse_config(text, str(path))


# -- presets ------------------------------------------------------------------

PRESETS = ("fig2", "fig3-opt", "fig4-media", "sm2-events", "sm5-tm", "sm9-sigma", "sm11-classical",
           "sm12-macropixels", "sm13-multiplicity", "sm14-diff-encoding")


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; run 'list' to see the presets")
    return resources.files("biphoton_lab").joinpath("presets", f"{name}.cfg").read_text()


def list_presets():
    """[(name, one-line description)] in a fixed order."""
    return [(name, parse_config(preset_text(name), name)["scenario"]["description"]) for name in PRESETS]


# -- builders -------------------------------------------------------------------

def _params(cfg: ScenarioConfig):
    s, o = cfg["spdc"], cfg["optics"]
    p = SPDCParams(lambda_p=s["lambda_p_nm"] * 1e-9, sigma_r=s["sigma_r_um"] * 1e-6,
                   sigma_k=s["sigma_k_per_m"], profile=s["profile"])
    oc = OpticalConfig(f0=o["f0_mm"] * 1e-3, f1=o["f1_mm"] * 1e-3, f2=o["f2_mm"] * 1e-3, f3=o["f3_mm"] * 1e-3,
                       f4=o["f4_mm"] * 1e-3, f5=o["f5_mm"] * 1e-3, lam=o["lambda_nm"] * 1e-9,
                       M_dprime=o["m_dprime"])
    return p, oc


def _object(cfg: ScenarioConfig, n: int) -> ObjectImage:
    ob = cfg["object"]
    if ob["kind"] == "digit8":
        return digit_eight(n)
    obj = ObjectImage.from_pgm(ob["path"], ob["threshold"])
    if obj.side != n:
        raise ConfigError(f"{cfg.source}: [object] image is {obj.side} px, grid n is {n}")
    return obj


def _desk(cfg: ScenarioConfig, macro_n: int | None = None) -> DeskSetup:
    g, m = cfg["grid"], cfg["medium"]
    p, oc = _params(cfg)
    seed = cfg.seed if m["seed"] is None else m["seed"]
    desk = studies.desk_with_medium(g["n"], macro_n or cfg["slm"]["macro_n"], m["kind"], m["corr_len_px"],
                                    m["envelope_sigma_px"], seed, pitch=g["pitch_um"] * 1e-6)
    desk.p, desk.cfg = p, oc
    return desk


def _opt(cfg: ScenarioConfig, macro_n: int, seed: int | None = None) -> OptConfig:
    o = cfg["optimization"]
    return OptConfig(macro_n=macro_n, phase_samples=o["phase_samples"], max_steps=o["max_steps"],
                     feedback=o["feedback"], seed=cfg.seed if seed is None else seed,
                     fraction=o["fraction"], plateau_window=o["plateau_window"], plateau_tol=o["plateau_tol"],
                     bins=o["bins"], phases=SIX_PHASES if o["six_phases"] else None,
                     pair_rate=o["pair_rate_hz"], batch_s=o["batch_s"], accidental_mean=o["accidental_mean"],
                     psi_tol=1e-9 if macro_n > 16 else 0.0)


def _merge(dst: studies.StudyResult, src: studies.StudyResult, prefix: str = ""):
    for attr in ("images", "tables", "traces", "masks"):
        getattr(dst, attr).update({prefix + k: v for k, v in getattr(src, attr).items()})
    dst.metrics.update({prefix + k: v for k, v in src.metrics.items()})


def run_experiment(cfg: ScenarioConfig) -> studies.StudyResult:
    exp = cfg.experiment
    g = cfg["grid"]
    n = g["n"]
    seed = cfg.seed
    macro_n = cfg["slm"]["macro_n"]
    if exp == "restoration":
        return studies.restoration(n, seed)
    if exp in ("fig2", "fig4-media", "fig3-opt", "sm11-classical"):
        desk = _desk(cfg)
        opt = studies.optimization(desk, _opt(cfg, macro_n), "guide")
        res = studies.StudyResult(exp, params=dict(opt.params))
        _merge(res, opt)
        mask = opt.masks["optimized"]
        res.masks["identity"] = identity_mask(desk.sm)
        if exp in ("fig2", "fig4-media"):
            sr = cfg["spdc"]["sigma_r_um"] * 1e-6
            _merge(res, studies.object_through_desk(desk, mask, _object(cfg, n), sigma_r=sr), "object_")
        if exp == "sm11-classical":
            _merge(res, studies.sm11_grid(desk, mask, _object(cfg, n)))
        return res
    if exp == "sm2-events":
        e = cfg["events"]
        return studies.event_pipeline(n, e["pairs"], e["duration_s"], e["noise_rate_hz"], e["jitter_ns"],
                                      e["window_ns"], seed, e["accidental_seeds"])
    if exp == "sm5-tm":
        res = studies.tm_measurement(n, macro_n, cfg["medium"]["corr_len_px"], seed, cfg["slm"]["phase_steps"])
        tm = res.params.pop("matrix")
        res.masks["identity_from_measured"] = identity_mask(tm)
        res.params["measured_tm"] = tm
        return res
    if exp == "sm9-sigma":
        return studies.sigma_signature(n, macro_n, cfg["medium"]["corr_len_px"], seed,
                                       cfg["optimization"]["max_steps"])
    if exp == "sm12-macropixels":
        sizes = [int(s) for s in cfg["optimization"]["sizes"].split(",")]
        return studies.macropixels(n, sizes, cfg["medium"]["corr_len_px"], seed, cfg["optimization"]["max_steps"])
    if exp == "sm13-multiplicity":
        runs = cfg["optimization"]["runs"]
        return studies.multiplicity(_desk(cfg), range(runs), cfg["optimization"]["max_steps"])
    if exp == "sm14-diff-encoding":
        return studies.difference_encoding(n, seed)
    raise ConfigError(f"experiment {exp!r} has no runner")


# -- output -----------------------------------------------------------------

def _display(img) -> np.ndarray:
    if isinstance(img, CorrelationImage):
        return img.centered()
    return np.asarray(img, dtype=float)


def write_image(img, path, fmt: str = "pgm16") -> str:
    """pgm16: max-normalized, negatives clamped, scale in a comment; csv: raw values."""
    v = _display(img)
    if not np.all(np.isfinite(v)):
        raise NumericError(f"{path}: image contains non-finite values")
    try:
        if fmt == "pgm16":
            write_pgm16_normalized(path, v)
        elif fmt == "csv":
            write_matrix_csv(path, v)
        else:
            raise ValueError(f"unknown image format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _check_finite(res: studies.StudyResult):
    for name, img in res.images.items():
        if not np.all(np.isfinite(_display(img))):
            raise NumericError(f"image {name!r} contains NaN or Inf")
    for name, tr in res.traces.items():
        if not np.all(np.isfinite(tr.objective)):
            raise NumericError(f"trace {name!r} contains NaN or Inf")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def write_result(res: studies.StudyResult, cfg: ScenarioConfig, out: str) -> list:
    ensure_dir(out)
    formats = [f.strip() for f in cfg["outputs"]["formats"].split(",")]
    base = f"experiment={cfg.experiment} seed={cfg.seed} n={cfg['grid']['n']}"
    entries = []

    def add(fname, what):
        entries.append((fname, what))
        return os.path.join(out, fname)

    for name, img in res.images.items():
        kind = "correlation image" if isinstance(img, CorrelationImage) else "image"
        if "pgm16" in formats:
            write_image(img, add(f"{name}.pgm", f"{kind}, max-normalized 16-bit; {base}"), "pgm16")
        if "csv" in formats:
            write_image(img, add(f"{name}.csv", f"{kind}, raw values; {base}"), "csv")
    for name, (header, rows) in res.tables.items():
        with open(add(f"{name}.csv", f"table ({', '.join(header)}); {base}"), "w") as fh:
            fh.write(",".join(header) + "\n")
            for r in rows:
                fh.write(",".join(_fmt(x) for x in r) + "\n")
    for name, tr in res.traces.items():
        tr.write_csv(add(f"{name}.csv" if name.startswith("trace") else f"trace_{name}.csv",
                         f"optimization trace ({tr.stopped}); {base}"))
    for name, mask in res.masks.items():
        fname = name if name.startswith("mask") else f"mask_{name}"
        write_biph1(add(f"{fname}.biph", f"phase mask {mask.macro_n}x{mask.macro_n}, radians; {base}"),
                    mask.image(), tag=f"mask {name}")
        write_pgm(add(f"{fname}.pgm", f"phase mask preview, 0..2pi -> 0..255; {base}"),
                  np.round(mask.image() / (2 * np.pi) * 255).clip(0, 255).astype(np.uint8), bits=8)
    tm = res.params.pop("measured_tm", None)
    if tm is not None:
        write_biph1(add("measured_tm.biph", f"measured transmission matrix, pixel basis; {base}"), tm.m,
                    tag="measured")
    with open(add("metrics.txt", f"scalar metrics; {base}"), "w") as fh:
        for k, v in res.metrics.items():
            fh.write(f"{k} = {_fmt(v)}\n")
    with open(os.path.join(out, "manifest.txt"), "w") as fh:
        fh.write(f"# experiment = {cfg.experiment}\n# seed = {cfg.seed}\n# config = {cfg.source}\n")
        for sec, vals in cfg.values.items():
            fh.write(f"# [{sec}] " + " ".join(f"{k}={_fmt(v)}" for k, v in vals.items()) + "\n")
        for k, v in res.params.items():
            fh.write(f"# param {k} = {_fmt(v)}\n")
        fh.write("manifest.txt\tthis file\n")
        for fname, what in entries:
            fh.write(f"{fname}\t{what}\n")
    return [e[0] for e in entries] + ["manifest.txt"]


def apply_overrides(cfg: ScenarioConfig, seed: int | None = None, full: bool = False) -> ScenarioConfig:
    if seed is not None:
        cfg.values["scenario"]["seed"] = int(seed)
    if full:
        cfg.values["grid"]["n"] = 51
    return cfg


def run_scenario(path, out: str | None = None, seed: int | None = None, full: bool = False) -> str:
    cfg = apply_overrides(load_config(path), seed, full)
    return run_config(cfg, out or os.path.join("runs", cfg.experiment))


def run_config(cfg: ScenarioConfig, out: str) -> str:
    res = run_experiment(cfg)
    _check_finite(res)
    write_result(res, cfg, out)
    return out
