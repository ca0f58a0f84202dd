"""Noisy-reverberant evaluation harness.

Builds corrupted scenarios ``s = x * h + w`` from a speech corpus, rooms and
noises, scores unprocessed and processed signals with ESII against the
direct-path reference, and writes one CSV row per (room, noise, SNR,
method) cell. Finished cells are cached on disk so an interrupted run can be
resumed.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .absorb import AbsorptionParams, absorb
from .metrics import delta_score, esii, extract_distortion, normalized_esii, speech_shaped_noise
from .room import RoomSpec, direct_path_signal, equalize_energy, ism_rir
from .signal import AudioSignal, convolve, load_wav, mix_at_snr
from .synth import speech_like_corpus

__all__ = [
    "Scenario",
    "RoomSource",
    "NoiseSource",
    "ExperimentConfig",
    "load_config",
    "make_scenario",
    "experiment_scenarios",
    "score_unprocessed",
    "score_processed",
    "reference_score",
    "run_evaluation",
    "EVAL_ROOM",
    "WORKERS_ENV",
]

log = logging.getLogger(__name__)

WORKERS_ENV = "ARA_NSD_WORKERS"
METHODS = ("UNP", "ARA_NSD")
RESULT_FIELDS = ["scenario", "noise", "snr_db", "method", "raw_esii", "normalized_esii", "delta_esii"]
CACHE_VERSION = 1

# The simulated listening-test room with the talker 0.8 m from the listener,
# off the room's symmetry planes (a mid-plane placement makes image sources
# coincide and inflates the reverberant energy by several dB).
EVAL_ROOM = RoomSpec(
    dimensions=(7.0, 5.2, 3.0),
    source_pos=(2.85, 2.12, 1.78),
    mic_pos=(3.5, 2.45, 1.45),
    target_t60=1.0,
)


@dataclass
class Scenario:
    clean: AudioSignal
    corrupted: AudioSignal
    direct: AudioSignal
    noise: AudioSignal


def make_scenario(
    x: AudioSignal,
    rir: AudioSignal,
    noise: AudioSignal,
    snr_db: float,
    rir_energy_db: float | None = 17.9,
) -> Scenario:
    """Reverberate ``x``, add ``noise`` at ``snr_db`` relative to the clean
    speech, and derive the direct-path reference.

    The noise must cover ``len(x) + len(rir) - 1`` samples. The SNR is the
    energy ratio of ``x`` and the scaled noise over the corrupted length.
    """
    if rir_energy_db is not None:
        rir = equalize_energy(rir, rir_energy_db)
    rev = convolve(x, rir)
    n = len(rev)
    padded = AudioSignal(np.pad(x.samples, (0, n - len(x))), x.sample_rate)
    _, w = mix_at_snr(padded, noise, snr_db, return_noise=True)
    corrupted = AudioSignal(rev.samples + w.samples, x.sample_rate)
    return Scenario(x, corrupted, direct_path_signal(x, rir), w)


def score_unprocessed(sc: Scenario) -> float:
    return esii(sc.direct, extract_distortion(sc.corrupted, sc.direct))


def score_processed(sc: Scenario, params: AbsorptionParams = AbsorptionParams(), **absorb_kwargs) -> tuple[float, AudioSignal]:
    """ESII of the processed signal and the processed signal itself.

    Any output peak normalization is applied to the reference as well, so the
    distortion is measured at a consistent scale.
    """
    res = absorb(sc.corrupted, params, **absorb_kwargs)
    ref = sc.direct.scaled(res.peak_scale)
    return esii(ref, extract_distortion(res.signal, ref)), res.signal


def reference_score(x: AudioSignal, ssn: AudioSignal, snr_db: float = 20.0) -> float:
    """ESII of clean speech in speech-shaped noise, the normalization anchor."""
    _, w = mix_at_snr(x, ssn, snr_db, return_noise=True)
    return esii(x, w)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoomSource:
    name: str
    spec: RoomSpec | None = None
    rir_path: str | None = None

    def load(self, seed: int) -> AudioSignal:
        if self.rir_path is not None:
            return load_wav(self.rir_path)
        return ism_rir(self.spec, rng_seed=seed)

    def fingerprint(self) -> dict:
        if self.rir_path is not None:
            return {"rir": _file_digest(self.rir_path)}
        return {"spec": asdict(self.spec)}


@dataclass(frozen=True)
class NoiseSource:
    name: str
    generator: str | None = "ssn"
    path: str | None = None

    def fingerprint(self) -> dict:
        if self.path is not None:
            return {"file": _file_digest(self.path)}
        return {"generator": self.generator}


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: str = "synthetic:10"
    rooms: tuple[RoomSource, ...] = (RoomSource("ism", EVAL_ROOM),)
    noises: tuple[NoiseSource, ...] = (NoiseSource("SSN"),)
    snrs: tuple[float, ...] = (-3.0, -2.0, -1.0, 0.0, 1.0)
    methods: tuple[str, ...] = METHODS
    params: AbsorptionParams = field(default_factory=AbsorptionParams)
    output_dir: str = "results"
    seed: int = 0
    rir_energy_db: float = 17.9
    reference_snr_db: float = 20.0
    sample_rate: int = 16000

    def __post_init__(self):
        if not self.snrs or not all(np.isfinite(self.snrs)):
            raise ValueError("SNR list must be non-empty and finite")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if not self.rooms or not self.noises:
            raise ValueError("at least one room and one noise are required")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def load_config(path) -> ExperimentConfig:
    """Read an INI experiment file.

    Sections: ``[experiment]`` (corpus, output_dir, seed, snrs, methods,
    rir_energy_db, reference_snr_db), ``[params]`` (any AbsorptionParams
    field), one ``[room NAME]`` per room (``rir = file.wav`` or dimensions,
    source, mic, t60, optional max_order) and one ``[noise NAME]`` per noise
    (``generator = ssn|white`` or ``file = noise.wav``). Relative paths are
    resolved against the config file's directory.
    """
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not cp.read(path):
        raise FileNotFoundError(path)
    base = path.parent

    def resolve(p: str) -> str:
        q = Path(p).expanduser()
        return str(q if q.is_absolute() else base / q)

    exp = cp["experiment"] if cp.has_section("experiment") else {}
    kw: dict = {}
    if "corpus" in exp:
        c = exp["corpus"]
        kw["corpus"] = c if c.startswith("synthetic:") else ",".join(resolve(p.strip()) for p in c.split(","))
    if "output_dir" in exp:
        kw["output_dir"] = resolve(exp["output_dir"])
    if "seed" in exp:
        kw["seed"] = int(exp["seed"])
    if "snrs" in exp:
        kw["snrs"] = _floats(exp["snrs"])
    if "methods" in exp:
        kw["methods"] = tuple(m.strip() for m in exp["methods"].split(",") if m.strip())
    for key in ("rir_energy_db", "reference_snr_db"):
        if key in exp:
            kw[key] = float(exp[key])
    if cp.has_section("params"):
        names = {f.name.lower(): f.name for f in fields(AbsorptionParams)}
        unknown = set(cp["params"]) - set(names)
        if unknown:
            raise ValueError(f"unknown [params] keys: {sorted(unknown)}")
        kw["params"] = AbsorptionParams(**{names[k]: float(v) for k, v in cp["params"].items()})

    rooms, noises = [], []
    for sec in cp.sections():
        kind, _, name = sec.partition(" ")
        name = name.strip()
        s = cp[sec]
        if kind == "room":
            if "rir" in s:
                rooms.append(RoomSource(name, rir_path=resolve(s["rir"])))
            else:
                spec = RoomSpec(
                    dimensions=_floats(s.get("dimensions", "7.0, 5.2, 3.0")),
                    source_pos=_floats(s["source"]),
                    mic_pos=_floats(s["mic"]),
                    target_t60=float(s.get("t60", "1.0")),
                    max_order=int(s["max_order"]) if "max_order" in s else None,
                )
                rooms.append(RoomSource(name, spec))
        elif kind == "noise":
            if "file" in s:
                noises.append(NoiseSource(name, None, resolve(s["file"])))
            else:
                noises.append(NoiseSource(name, s.get("generator", "ssn").strip().lower()))
    if rooms:
        kw["rooms"] = tuple(rooms)
    if noises:
        kw["noises"] = tuple(noises)
    return ExperimentConfig(**kw)


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_corpus(spec: str, sample_rate: int = 16000, seed: int = 0) -> list[AudioSignal]:
    """``synthetic:N`` or a comma list of WAV files and directories."""
    if spec.startswith("synthetic:"):
        return speech_like_corpus(int(spec.split(":", 1)[1]), fs=sample_rate, seed=seed)
    files: list[Path] = []
    for item in spec.split(","):
        p = Path(item.strip())
        files.extend(sorted(p.glob("*.wav")) if p.is_dir() else [p])
    if not files:
        raise ValueError(f"no WAV files in corpus {spec!r}")
    return [load_wav(f) for f in files]


def _corpus_fingerprint(spec: str) -> str:
    if spec.startswith("synthetic:"):
        return spec
    h = hashlib.sha256()
    for item in spec.split(","):
        p = Path(item.strip())
        for f in sorted(p.glob("*.wav")) if p.is_dir() else [p]:
            h.update(f.name.encode())
            h.update(_file_digest(f).encode())
    return h.hexdigest()


def _noise_for(src: NoiseSource, n: int, utt: int, corpus_ssn: AudioSignal, seed: int, fs: int) -> AudioSignal:
    rng = np.random.default_rng([seed, utt, 7])
    if src.path is not None:
        w = load_wav(src.path)
        if w.sample_rate != fs:
            raise ValueError(f"noise {src.name} is at {w.sample_rate} Hz, corpus at {fs} Hz")
        data = np.tile(w.samples, int(np.ceil(2 * n / len(w))) + 1)
        start = int(rng.integers(0, len(w)))
        return AudioSignal(data[start : start + n], fs)
    if src.generator == "ssn":
        return speech_shaped_noise(corpus_ssn, n, seed=int(rng.integers(2**31)))
    if src.generator == "white":
        return AudioSignal(rng.standard_normal(n), fs)
    raise ValueError(f"unknown noise generator {src.generator!r}")


@dataclass(frozen=True)
class _Cell:
    room: RoomSource
    noise: NoiseSource
    snr_db: float
    method: str


class _Context:
    """Shared, lazily built inputs of one evaluation run."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.corpus = load_corpus(cfg.corpus, cfg.sample_rate, cfg.seed)
        fs = {x.sample_rate for x in self.corpus}
        if len(fs) != 1:
            raise ValueError("corpus mixes sample rates")
        self.fs = fs.pop()
        self.ssn = speech_shaped_noise(
            AudioSignal(np.concatenate([x.samples for x in self.corpus]), self.fs),
            sum(len(x) for x in self.corpus),
            seed=cfg.seed,
        )
        self._rirs: dict[str, AudioSignal] = {}

    def rir(self, room: RoomSource) -> AudioSignal:
        if room.name not in self._rirs:
            h = room.load(self.cfg.seed)
            if h.sample_rate != self.fs:
                raise ValueError(f"room {room.name} RIR is at {h.sample_rate} Hz, corpus at {self.fs} Hz")
            self._rirs[room.name] = h
        return self._rirs[room.name]

    def reference_scores(self) -> list[float]:
        out = []
        for i, x in enumerate(self.corpus):
            rng = np.random.default_rng([self.cfg.seed, i, 20])
            start = int(rng.integers(0, max(1, len(self.ssn) - len(x))))
            out.append(reference_score(x, self.ssn.replace(self.ssn.samples[start : start + len(x)]), self.cfg.reference_snr_db))
        return out


def _cell_key(cfg: ExperimentConfig, cell: _Cell, corpus_fp: str) -> str:
    payload = {
        "version": CACHE_VERSION,
        "corpus": corpus_fp,
        "seed": cfg.seed,
        "room": cell.room.fingerprint(),
        "noise": cell.noise.fingerprint(),
        "snr_db": cell.snr_db,
        "method": cell.method,
        "params": asdict(cfg.params) if cell.method != "UNP" else None,
        "rir_energy_db": cfg.rir_energy_db,
        "reference_snr_db": cfg.reference_snr_db,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:24]


def _scenarios(ctx: _Context, room: RoomSource, noise: NoiseSource, snr_db: float):
    rir = ctx.rir(room)
    for i, x in enumerate(ctx.corpus):
        n = len(x) + len(rir) - 1
        w = _noise_for(noise, n, i, ctx.ssn, ctx.cfg.seed, ctx.fs)
        yield make_scenario(x, rir, w, snr_db, ctx.cfg.rir_energy_db)


def experiment_scenarios(
    cfg: ExperimentConfig,
    snr_db: float,
    room: RoomSource | None = None,
    noise: NoiseSource | None = None,
) -> list[Scenario]:
    """The per-utterance scenarios that :func:`run_evaluation` scores for one
    cell (first room and noise of ``cfg`` by default)."""
    ctx = _Context(cfg)
    return list(_scenarios(ctx, room or cfg.rooms[0], noise or cfg.noises[0], snr_db))


def _evaluate_cell(ctx: _Context, cell: _Cell, refs: list[float]) -> dict:
    cfg = ctx.cfg
    raws, norms = [], []
    for i, sc in enumerate(_scenarios(ctx, cell.room, cell.noise, cell.snr_db)):
        raw = score_unprocessed(sc) if cell.method == "UNP" else score_processed(sc, cfg.params)[0]
        raws.append(raw)
        norms.append(normalized_esii(raw, refs[i]))
    return {"raw_esii": float(np.mean(raws)), "normalized_esii": float(np.mean(norms)), "per_utterance": norms}


_worker_ctx: _Context | None = None


def _worker_init(cfg: ExperimentConfig) -> None:
    global _worker_ctx
    _worker_ctx = _Context(cfg)


def _worker_run(cell: _Cell, refs: list[float]) -> dict:
    return _evaluate_cell(_worker_ctx, cell, refs)


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def run_evaluation(cfg: ExperimentConfig, workers: int | None = None) -> tuple[Path, int]:
    """Evaluate every cell and write ``results.csv`` in ``cfg.output_dir``.

    Returns the CSV path and the number of failed cells. Cells already
    present in the cache directory are reused.
    """
    out = Path(cfg.output_dir)
    cache = out / "cells"
    cache.mkdir(parents=True, exist_ok=True)
    workers = workers or int(os.environ.get(WORKERS_ENV, "1"))

    ctx = _Context(cfg)
    corpus_fp = _corpus_fingerprint(cfg.corpus)
    ref_path = cache / f"reference-{hashlib.sha256(json.dumps([corpus_fp, cfg.seed, cfg.reference_snr_db]).encode()).hexdigest()[:24]}.json"
    if ref_path.exists():
        refs = json.loads(ref_path.read_text())["per_utterance"]
    else:
        refs = ctx.reference_scores()
        ref_path.write_text(json.dumps({"per_utterance": refs}))

    cells = [
        _Cell(room, noise, float(snr), method)
        for room in cfg.rooms
        for noise in cfg.noises
        for snr in cfg.snrs
        for method in cfg.methods
    ]
    # UNP is the baseline for every delta, so it is always evaluated.
    needed = list(cells)
    for c in cells:
        base = _Cell(c.room, c.noise, c.snr_db, "UNP")
        if base not in needed:
            needed.append(base)

    results: dict[_Cell, dict] = {}
    todo = []
    for c in needed:
        path = cache / f"{_cell_key(cfg, c, corpus_fp)}.json"
        if path.exists():
            results[c] = json.loads(path.read_text())
        else:
            todo.append((c, path))

    failed = 0

    def store(c: _Cell, path: Path, res: dict) -> None:
        results[c] = res
        path.write_text(json.dumps(res))

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init, initargs=(cfg,)) as pool:
            futures = [(c, p, pool.submit(_worker_run, c, refs)) for c, p in todo]
            for c, p, fut in futures:
                try:
                    store(c, p, fut.result())
                except Exception:
                    failed += 1
                    log.exception("cell %s/%s/%g/%s failed", c.room.name, c.noise.name, c.snr_db, c.method)
    else:
        for c, p in todo:
            try:
                store(c, p, _evaluate_cell(ctx, c, refs))
            except Exception:
                failed += 1
                log.exception("cell %s/%s/%g/%s failed", c.room.name, c.noise.name, c.snr_db, c.method)

    csv_path = out / "results.csv"
    with open(csv_path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(RESULT_FIELDS)
        wr.writerow(["reference", "SSN", _fmt(cfg.reference_snr_db), "CLEAN", _fmt(float(np.mean(refs))), _fmt(1.0), _fmt(0.0)])
        for c in cells:
            if c not in results:
                continue
            base = results.get(_Cell(c.room, c.noise, c.snr_db, "UNP"))
            r = results[c]
            delta = delta_score(r["normalized_esii"], base["normalized_esii"]) if base else float("nan")
            wr.writerow([
                c.room.name, c.noise.name, _fmt(c.snr_db), c.method,
                _fmt(r["raw_esii"]), _fmt(r["normalized_esii"]), _fmt(delta),
            ])
    _write_tables(out, cfg, results)
    return csv_path, failed


def _write_tables(out: Path, cfg: ExperimentConfig, results: dict) -> None:
    """Per room and method: noises down, SNRs across. UNP tables hold
    normalized ESII, processed tables hold the delta in 1e-2 units."""
    for room in cfg.rooms:
        for method in cfg.methods:
            path = out / f"table_{room.name}_{method}.csv"
            with open(path, "w", newline="") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(["noise"] + [f"{s:g}" for s in cfg.snrs])
                for noise in cfg.noises:
                    row = [noise.name]
                    for snr in cfg.snrs:
                        r = results.get(_Cell(room, noise, float(snr), method))
                        base = results.get(_Cell(room, noise, float(snr), "UNP"))
                        if r is None or base is None:
                            row.append("")
                        elif method == "UNP":
                            row.append(_fmt(r["normalized_esii"]))
                        else:
                            row.append(_fmt(delta_score(r["normalized_esii"], base["normalized_esii"])))
                    wr.writerow(row)
