"""Command-line front end.

Subcommands: ``absorb``, ``simulate``, ``mix``, ``ins`` and ``evaluate``.
Exit status is 0 on success, 1 for usage errors, 2 for data errors and 3 for
numerical failures.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
from dataclasses import fields, replace

import numpy as np

from . import __version__
from .absorb import AbsorptionParams, absorb, write_frames_csv
from .detect import write_groups_csv
from .evaluate import load_config, run_evaluation
from .ins import InsConfig, ins_profile
from .room import RoomSpec, direct_path_signal, equalize_energy, ism_rir, measure_rir
from .signal import AudioSignal, convolve, frame_signal, load_wav, mix_at_snr, save_wav

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("ara_nsd")

_PARAM_FLAGS = {
    "k": "--k",
    "d0": "--d0",
    "k_prime": "--k-prime",
    "d0_prime": "--d0-prime",
    "S": "--shift",
    "L_prime": "--l-prime",
    "p": "--p",
    "theta_ins": "--theta-ins",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _triple(text: str) -> tuple[float, float, float]:
    vals = tuple(float(v) for v in text.split(","))
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated numbers")
    return vals


def _params_from(args) -> AbsorptionParams:
    defaults = AbsorptionParams()
    kw = {}
    for f in fields(AbsorptionParams):
        v = getattr(args, f.name)
        kw[f.name] = getattr(defaults, f.name) if v is None else v
    return AbsorptionParams(**kw)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_absorb(args) -> int:
    x = load_wav(args.input)
    params = _params_from(args)
    res = absorb(
        x,
        params,
        frame_ms=args.frame_ms,
        group_ins_cfg=InsConfig(rng_seed=args.seed),
        frame_ins_cfg=InsConfig.fast(frame_signal(x, args.frame_ms).frame_len, rng_seed=args.seed),
        median_theta=args.median_theta,
    )
    save_wav(res.signal, args.output, encoding=args.encoding, clamp=True)
    if args.diagnostics:
        write_frames_csv(args.diagnostics, res)
    if args.groups:
        write_groups_csv(args.groups, res.groups, frame_signal(x, args.frame_ms))
    masked = sum(g.masked for g in res.groups)
    print(
        f"frames={len(res.gains)} groups={len(res.groups)} masked_groups={masked} "
        f"theta_ins={res.theta_ins:.4f} peak_scale={res.peak_scale:.6f}"
    )
    return EXIT_OK


def _room_from_args(args) -> RoomSpec:
    if args.config:
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        if not cp.read(args.config):
            raise FileNotFoundError(args.config)
        sections = [s for s in cp.sections() if s == "room" or s.startswith("room ")]
        if not sections:
            raise ValueError(f"{args.config}: no [room] section")
        s = cp[sections[0]]
        return RoomSpec(
            dimensions=_triple(s.get("dimensions", "7.0, 5.2, 3.0")),
            source_pos=_triple(s["source"]),
            mic_pos=_triple(s["mic"]),
            target_t60=float(s.get("t60", "1.0")),
            sample_rate=int(s.get("sample_rate", "16000")),
            max_order=int(s["max_order"]) if "max_order" in s else None,
        )
    if args.source is None or args.mic is None:
        raise UsageError("simulate needs --config or both --source and --mic")
    return RoomSpec(
        dimensions=args.dims,
        source_pos=args.source,
        mic_pos=args.mic,
        target_t60=args.t60,
        sample_rate=args.sample_rate,
        max_order=args.max_order,
    )


def cmd_simulate(args) -> int:
    spec = _room_from_args(args)
    rir = ism_rir(spec, rng_seed=args.seed)
    if args.energy_db is not None:
        rir = equalize_energy(rir, args.energy_db)
    save_wav(rir, args.output, encoding="float32")
    m = measure_rir(rir)
    print(f"T60={m.t60:.4f} s DRR={m.drr:.2f} dB energy={m.total_energy_db:.2f} dB")
    return EXIT_OK


def cmd_mix(args) -> int:
    x = load_wav(args.speech)
    rir = load_wav(args.rir)
    if args.rir_energy_db is not None:
        rir = equalize_energy(rir, args.rir_energy_db)
    rev = convolve(x, rir)
    n = len(rev)
    noise = load_wav(args.noise)
    if noise.sample_rate != x.sample_rate:
        raise ValueError("noise and speech sample rates differ")
    if not np.any(noise.samples):
        log.warning("noise file is silent; no noise added")
        w = AudioSignal(np.zeros(n), x.sample_rate)
    else:
        padded = AudioSignal(np.pad(x.samples, (0, n - len(x))), x.sample_rate)
        _, w = mix_at_snr(padded, noise, args.snr, tile=True, return_noise=True)
    corrupted = AudioSignal(rev.samples + w.samples, x.sample_rate)
    save_wav(corrupted, args.output, encoding="float32")
    save_wav(direct_path_signal(x, rir), args.sdir, encoding="float32")
    if args.noise_out:
        save_wav(w, args.noise_out, encoding="float32")
    return EXIT_OK


def cmd_ins(args) -> int:
    x = load_wav(args.input)
    cfg = InsConfig(n_surrogates=args.surrogates, rng_seed=args.seed, confidence=args.confidence)
    prof = ins_profile(x, cfg)
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scale", "ins", "gamma", "verdict"])
        for s, i, g, verdict in prof.rows():
            w.writerow([f"{s:.6f}", f"{i:.6f}", f"{g:.6f}", verdict])
    n_ns = int(np.sum(prof.is_nonstationary))
    print(f"max_ins={prof.max_ins:.3f} nonstationary_scales={n_ns}/{len(prof.scales)}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    path, failed = run_evaluation(cfg, workers=args.workers)
    print(f"wrote {path}" + (f" ({failed} failed cells)" if failed else ""))
    return EXIT_DATA if failed else EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ara-nsd", description="Non-stationarity driven reverberation absorption toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("absorb", help="process a WAV file")
    a.add_argument("input")
    a.add_argument("output")
    a.add_argument("--frame-ms", type=float, default=32.0)
    a.add_argument("--median-theta", action="store_true", help="use the utterance median as threshold")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--encoding", choices=["float32", "pcm16"], default="float32")
    a.add_argument("--diagnostics", metavar="CSV", help="per-frame gains and distances")
    a.add_argument("--groups", metavar="CSV", help="per-group variation and masked flags")
    for name, flag in _PARAM_FLAGS.items():
        a.add_argument(flag, dest=name, type=float, default=None,
                       help=f"default {getattr(AbsorptionParams(), name)}")
    a.set_defaults(func=cmd_absorb)

    s = sub.add_parser("simulate", help="generate an image-source RIR")
    s.add_argument("output")
    s.add_argument("--config", help="INI file with a [room] section")
    s.add_argument("--dims", type=_triple, default=(7.0, 5.2, 3.0))
    s.add_argument("--source", type=_triple)
    s.add_argument("--mic", type=_triple)
    s.add_argument("--t60", type=float, default=1.0)
    s.add_argument("--sample-rate", type=int, default=16000)
    s.add_argument("--max-order", type=int)
    s.add_argument("--energy-db", type=float, help="equalize total RIR energy to this level")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("mix", help="build a noisy-reverberant mixture and its direct-path reference")
    m.add_argument("--speech", required=True)
    m.add_argument("--rir", required=True)
    m.add_argument("--noise", required=True)
    m.add_argument("--snr", type=float, required=True, help="dB, relative to the clean speech")
    m.add_argument("--rir-energy-db", type=float)
    m.add_argument("--output", required=True)
    m.add_argument("--sdir", required=True)
    m.add_argument("--noise-out")
    m.set_defaults(func=cmd_mix)

    i = sub.add_parser("ins", help="index of non-stationarity per scale")
    i.add_argument("input")
    i.add_argument("output")
    i.add_argument("--surrogates", type=int, default=50)
    i.add_argument("--confidence", type=float, default=0.95)
    i.add_argument("--seed", type=int, default=0)
    i.set_defaults(func=cmd_ins)

    e = sub.add_parser("evaluate", help="run an experiment matrix")
    e.add_argument("config")
    e.add_argument("--output-dir")
    e.add_argument("--workers", type=int, help="parallel cells (default: $ARA_NSD_WORKERS or 1)")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ara-nsd: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"ara-nsd: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"ara-nsd: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
