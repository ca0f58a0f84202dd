"""Acceptance suite.

Each test checks one numbered criterion and prints a single
``criterion N: PASS|FAIL ...`` line with the measured values, whether or not
the assertion holds. Run with ``pytest tests/test_acceptance.py -v``.
"""

import csv
import math
import time
import warnings
from dataclasses import replace

import numpy as np
import pytest

from ara_nsd.absorb import AbsorptionParams, absorption_gain, emphasis_factor, update_max_absorption
from ara_nsd.detect import delta_ins
from ara_nsd.evaluate import EVAL_ROOM, ExperimentConfig, experiment_scenarios, run_evaluation, score_processed
from ara_nsd.ins import InsConfig, ins_profile
from ara_nsd.metrics import speech_shaped_noise
from ara_nsd.room import RoomSpec, estimate_t60, ism_rir
from ara_nsd.signal import AudioSignal, frame_signal, mix_at_snr, overlap_add, snr_db
from ara_nsd.synth import speech_like

FS = 16000


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, f"criterion {number}: {detail}"

    return emit


# -- 1 -------------------------------------------------------------------------


def test_criterion_1_cola_identity(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal(int(rng.integers(1_000, 50_000)))
        y = overlap_add(frame_signal(AudioSignal(x, FS), 32.0, 0.5)).samples
        worst = max(worst, np.linalg.norm(y - x) / np.linalg.norm(x))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-6 and elapsed < 10.0, f"max relative error {worst:.2e} over 100 signals in {elapsed:.2f} s")


# -- 2 -------------------------------------------------------------------------


def _delta_oracle(a, b):
    na = math.sqrt(sum(v * v for v in a))
    nb = math.sqrt(sum(v * v for v in b))
    if na + nb == 0.0:
        return 0.0
    return math.sqrt(sum((u - v) ** 2 for u, v in zip(a, b))) / (na + nb)


def _emphasis_oracle(d):
    return 0.0 if d == 0.0 else math.exp((1.2 - d) * math.log(d))


def _gain_oracle(d, delta, L, p):
    if delta <= p.theta_ins:
        return _emphasis_oracle(d) * (L - p.S) / (1.0 + math.exp(-p.k * (d - p.d0))) + p.S
    return p.L_prime / (1.0 + math.exp(-p.k_prime * (d - p.d0_prime)))


def test_criterion_2_gain_law_oracles(report):
    rng = np.random.default_rng(7)
    err = {"delta": 0.0, "F": 0.0, "L": 0.0, "A": 0.0}
    for _ in range(1000):
        size = int(rng.integers(2, 12))
        a, b = rng.uniform(0, 200, size), rng.uniform(0, 200, size)
        if rng.random() < 0.05:
            b = np.zeros(size)
        err["delta"] = max(err["delta"], abs(delta_ins(a, b) - _delta_oracle(a.tolist(), b.tolist())))
        d, delta, L_prev = rng.uniform(0, 1, 3)
        err["F"] = max(err["F"], abs(emphasis_factor(d) - _emphasis_oracle(d)))
        p = AbsorptionParams(
            k=rng.uniform(1, 30), d0=rng.uniform(-1, 1), k_prime=rng.uniform(1, 30),
            d0_prime=rng.uniform(0, 1), S=rng.uniform(0.01, 0.3), L_prime=rng.uniform(0.5, 2),
            p=rng.uniform(0, 1), theta_ins=rng.uniform(0, 1),
        )
        L = update_max_absorption(L_prev, delta, p.p)
        err["L"] = max(err["L"], abs(L - (p.p * delta + (1 - p.p) * L_prev)))
        err["A"] = max(err["A"], abs(absorption_gain(d, delta, L, p) - _gain_oracle(d, delta, L, p)))

    grid = np.linspace(0.0, 1.0, 10_000)
    P = AbsorptionParams()
    masked = np.array([absorption_gain(d, 0.1, 0.8, P) for d in grid])
    speech = np.array([absorption_gain(d, 0.9, 0.8, P) for d in grid])
    monotone = bool(np.all(np.diff(masked) >= 0) and np.all(np.diff(speech) >= 0))
    deltas = [delta_ins(rng.uniform(-5, 5, 6), rng.uniform(-5, 5, 6)) for _ in range(1000)]
    in_range = min(deltas) >= 0.0 and max(deltas) <= 1.0

    ok = max(err.values()) <= 1e-12 and monotone and in_range
    detail = " ".join(f"{k}={v:.1e}" for k, v in err.items())
    report(2, ok, f"max abs errors {detail}; monotone={monotone}; delta in [0,1]={in_range}")


# -- 3 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_3_ins_calibration(report):
    t0 = time.perf_counter()
    cfg = InsConfig()
    rejections = np.zeros(len(cfg.scales))
    for trial in range(100):
        x = np.random.default_rng([3, trial]).standard_normal(4096)
        rejections += ins_profile(x, replace(cfg, rng_seed=trial)).is_nonstationary
    rates = rejections / 100.0
    detected = 0
    for trial in range(100):
        x = np.random.default_rng([4, trial]).standard_normal(4096)
        x[:2048] = 0.0
        detected += bool(ins_profile(x, replace(cfg, rng_seed=trial)).is_nonstationary.any())
    elapsed = time.perf_counter() - t0
    ok = rates.max() <= 0.15 and detected >= 95 and elapsed < 300
    report(3, ok, f"white-noise rejection per scale {np.round(rates, 2).tolist()}; "
                  f"half-silence detected {detected}/100; {elapsed:.0f} s")


# -- 4 -------------------------------------------------------------------------


def test_criterion_4_ism_sabine(report):
    t0 = time.perf_counter()
    measured = {}
    for target in (1.0, 0.3, 0.5, 2.0):
        measured[target] = estimate_t60(ism_rir(RoomSpec(target_t60=target)))
    elapsed = time.perf_counter() - t0
    errs = {t: abs(m - t) / t for t, m in measured.items()}
    ok = max(errs.values()) <= 0.15 and elapsed < 120
    detail = ", ".join(f"{t:g} s -> {m:.3f} s" for t, m in measured.items())
    report(4, ok, f"{detail}; max relative error {max(errs.values()):.3f}; {elapsed:.1f} s")


# -- 5 -------------------------------------------------------------------------


def test_criterion_5_snr_exactness(report):
    x = speech_like(3.0, FS, seed=11)
    noise = speech_shaped_noise(x, len(x), seed=5)
    worst = 0.0
    for target in (-3.0, -2.0, -1.0, 0.0, 1.0, 20.0):
        mix, w = mix_at_snr(x, noise, target, return_noise=True)
        worst = max(worst, abs(snr_db(x.samples, w.samples) - target))
        worst = max(worst, abs(snr_db(x.samples, mix.samples - x.samples) - target))
    report(5, worst <= 0.01, f"max |requested - measured| = {worst:.2e} dB")


# -- 6 and 7 -----------------------------------------------------------------------

SCENARIO_CFG = ExperimentConfig(corpus="synthetic:10", snrs=(-3.0, 0.0), seed=0)


@pytest.fixture(scope="module")
def evaluation(tmp_path_factory):
    out = tmp_path_factory.mktemp("criterion6")
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        path, failed = run_evaluation(replace(SCENARIO_CFG, output_dir=str(out)), workers=1)
    rows = list(csv.DictReader(open(path)))
    return rows, failed, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_6_directional_intelligibility(report, evaluation):
    rows, failed, elapsed = evaluation
    cells = {}
    for r in rows[1:]:
        cells.setdefault(float(r["snr_db"]), {})[r["method"]] = float(r["normalized_esii"])
    ok = failed == 0 and elapsed < 900 and len(cells) == 2
    parts = []
    for snr in sorted(cells):
        unp, ara = cells[snr]["UNP"], cells[snr]["ARA_NSD"]
        ok &= ara > unp and 0.3 <= unp <= 0.85
        parts.append(f"{snr:+g} dB UNP {unp:.3f} ARA {ara:.3f} delta {100 * (ara - unp):+.2f}e-2")
    report(6, ok, "; ".join(parts) + f"; room distance {EVAL_ROOM.distance:.2f} m; {elapsed:.0f} s")


@pytest.mark.slow
def test_criterion_7_ins_restoration(report):
    scenarios = experiment_scenarios(SCENARIO_CFG, 0.0)
    wins, pairs = 0, []
    for sc in scenarios:
        _, y = score_processed(sc, SCENARIO_CFG.params)
        before = ins_profile(sc.corrupted).max_ins
        after = ins_profile(y).max_ins
        wins += after > before
        pairs.append(f"{before:.0f}->{after:.0f}")
    report(7, wins >= 8, f"processed max INS higher in {wins}/10 utterances ({', '.join(pairs)})")


# -- 8 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_8_determinism(report, tmp_path):
    cfg = ExperimentConfig(
        corpus="synthetic:2",
        rooms=SCENARIO_CFG.rooms,
        snrs=(-3.0, 0.0),
        seed=42,
    )
    outputs = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for run in ("a", "b"):
            path, failed = run_evaluation(replace(cfg, output_dir=str(tmp_path / run)), workers=1)
            assert failed == 0
            outputs.append(path.read_bytes())
    same = outputs[0] == outputs[1]
    n_rows = outputs[0].count(b"\n")
    report(8, same, f"two fresh runs, results.csv byte-identical={same} ({n_rows} lines)")
