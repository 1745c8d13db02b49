"""Command-line front end.

Subcommands: code-info, decode, train, train-online, eval, sweep,
verify-theory. Option precedence is flags > config file > defaults
(GANDEC_SEED in the environment seeds the default seed). The fully
resolved configuration is echoed to stderr before a run so any result
can be reproduced from its log.

Config files are `key = value` lines, # comments allowed; keys use the
long flag names (dashes or underscores). LLR files are raw little-endian
float64, frame-major, with a multiple of n values.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .alist import load_alist, save_alist
from .bp import BpDecoder
from .channel import Rng
from .codes import LinearCode, code_by_name
from .errors import GandecError, ParseError, UsageError
from .evaluation import (
    FerRecord,
    MlDecoder,
    equilibrium_report,
    estimate_fer,
    fer_records_to_csv,
    quantized_awgn_channel,
    snr_sweep,
)
from .gan import (
    GanTrainConfig,
    init_discriminator,
    load_checkpoint,
    save_checkpoint,
    train_offline,
    train_online,
)
from .gf2 import generator_from_parity
from .unfolded import UnfoldedBpDecoder

_COMMANDS = ("code-info", "decode", "train", "train-online", "eval", "sweep",
             "verify-theory")

# defaults follow the reference experiment settings: 5 unfolded iterations,
# Adam at 1e-3, batches of 64
_DEFAULTS: dict[str, dict] = {
    "common": {
        "code": "bch15_11",
        "seed": None,  # resolved from GANDEC_SEED, then 0
        "workers": 1,
        "out": None,
    },
    "code-info": {"alist_out": None},
    "decode": {"llr_file": None, "decoder": "bp100", "bits_out": None},
    "train": {
        "layers": 5, "mode": "full", "lr": 1e-3, "batch": 64,
        "train_frames": 10_000, "epochs": 1, "snr_train": 4.0,
        "lambda_sup": 1.0, "lambda_adv": 1.0, "d_steps": 1,
        "gen_loss": "saturating", "val_every": 0, "val_frames": 2000,
        "disc_hidden": 1024, "save": None, "log": None,
    },
    "train-online": {
        "llr_file": None, "warm_start": None, "layers": 5, "mode": "full",
        "lr": 1e-3, "batch": 64, "lambda_adv": 1.0, "d_steps": 1,
        "gen_loss": "saturating", "disc_hidden": 1024,
        "save": None, "log": None, "max_steps": 0,
    },
    "eval": {"decoder": "bp100", "snr": "4", "frames": 10_000},
    "sweep": {
        "decoders": "bp100,unfolded,gandec", "snr": "1:6:1",
        "frames": 10_000, "plot_data": None, "layers": 5,
    },
    "verify-theory": {
        "mc_samples": 1_000_000, "disc_steps": 300, "eval_samples": 20_000,
        "levels": 5, "snr_channel": 2.0, "tolerance": 0.05,
    },
}


@dataclass
class RunConfig:
    command: str
    options: dict

    def __getitem__(self, key):
        return self.options[key]


def _known_keys(command: str) -> set[str]:
    return set(_DEFAULTS["common"]) | set(_DEFAULTS.get(command, {})) | {"config"}


def _parse_config_file(text: str, command: str) -> dict:
    out = {}
    known = _known_keys(command)
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw!r}", line=line_no)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ParseError(f"unknown key {key!r}", line=line_no)
        out[key] = value
    return out


# types for keys whose default is None and so carries no type information
_FILE_TYPES = {"seed": int, "workers": int}


def _coerce(key, value, template):
    """Cast a config-file string to the type of the matching default."""
    if not isinstance(value, str):
        return value
    if key in _FILE_TYPES:
        return _FILE_TYPES[key](value)
    if template is None:
        return value
    if isinstance(template, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(template, int):
        return int(value)
    if isinstance(template, float):
        return float(value)
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gandec",
        description="Decoders for linear block codes: classic and trainable "
                    "belief propagation with adversarial training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--code", help="built-in name or path to an .alist file")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", help="CSV output path (default: stdout)")

    p = sub.add_parser("code-info", help="print code parameters")
    add_common(p)
    p.add_argument("--alist-out", dest="alist_out", help="write H as alist")

    p = sub.add_parser("decode", help="decode frames from an LLR file")
    add_common(p)
    p.add_argument("--llr-file", dest="llr_file")
    p.add_argument("--decoder")
    p.add_argument("--bits-out", dest="bits_out", help="write decoded bits")

    p = sub.add_parser("train", help="offline adversarial/supervised training")
    add_common(p)
    p.add_argument("--layers", type=int)
    p.add_argument("--mode", choices=("full", "simplified", "offset-min-sum"))
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--train-frames", dest="train_frames", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--snr-train", dest="snr_train", type=float)
    p.add_argument("--lambda-sup", dest="lambda_sup", type=float)
    p.add_argument("--lambda-adv", dest="lambda_adv", type=float)
    p.add_argument("--d-steps", dest="d_steps", type=int)
    p.add_argument("--gen-loss", dest="gen_loss",
                   choices=("saturating", "non-saturating"))
    p.add_argument("--val-every", dest="val_every", type=int)
    p.add_argument("--val-frames", dest="val_frames", type=int)
    p.add_argument("--disc-hidden", dest="disc_hidden", type=int)
    p.add_argument("--save", help="checkpoint output path")
    p.add_argument("--log", help="training log CSV path")

    p = sub.add_parser("train-online", help="label-free adaptation from LLR frames")
    add_common(p)
    p.add_argument("--llr-file", dest="llr_file")
    p.add_argument("--warm-start", dest="warm_start", help="checkpoint to adapt")
    p.add_argument("--layers", type=int)
    p.add_argument("--mode", choices=("full", "simplified", "offset-min-sum"))
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--lambda-adv", dest="lambda_adv", type=float)
    p.add_argument("--d-steps", dest="d_steps", type=int)
    p.add_argument("--gen-loss", dest="gen_loss",
                   choices=("saturating", "non-saturating"))
    p.add_argument("--disc-hidden", dest="disc_hidden", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--save", help="checkpoint output path")
    p.add_argument("--log", help="training log CSV path")

    p = sub.add_parser("eval", help="FER of one decoder at one or more SNRs")
    add_common(p)
    p.add_argument("--decoder")
    p.add_argument("--snr")
    p.add_argument("--frames", type=int)

    p = sub.add_parser("sweep", help="FER of several decoders across SNRs")
    add_common(p)
    p.add_argument("--decoders")
    p.add_argument("--snr")
    p.add_argument("--frames", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--plot-data", dest="plot_data",
                   help="write gnuplot data blocks plus a .plt script")

    p = sub.add_parser("verify-theory",
                       help="check the ML-decoder equilibrium numerically")
    add_common(p)
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p.add_argument("--disc-steps", dest="disc_steps", type=int)
    p.add_argument("--eval-samples", dest="eval_samples", type=int)
    p.add_argument("--levels", type=int)
    p.add_argument("--snr-channel", dest="snr_channel", type=float)
    p.add_argument("--tolerance", type=float)
    return parser


def parse_config(argv, config_text: str | None = None) -> RunConfig:
    """Resolve a RunConfig; flags override file values override defaults."""
    parser = build_parser()
    try:
        namespace = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code not in (0, None):
            raise UsageError(f"bad command line: {argv}") from None
        raise
    command = namespace.command
    resolved = dict(_DEFAULTS["common"])
    resolved.update(_DEFAULTS.get(command, {}))
    if config_text is None and getattr(namespace, "config", None):
        config_text = Path(namespace.config).read_text()
    if config_text is not None:
        file_values = _parse_config_file(config_text, command)
        for key, value in file_values.items():
            resolved[key] = _coerce(key, value, resolved.get(key))
    for key, value in vars(namespace).items():
        if key in ("command", "config") or value is None:
            continue
        resolved[key] = value
    if resolved.get("seed") is None:
        resolved["seed"] = int(os.environ.get("GANDEC_SEED", "0"))
    return RunConfig(command=command, options=resolved)


def _echo_config(config: RunConfig, err=None):
    err = err if err is not None else sys.stderr
    print(f"# command = {config.command}", file=err)
    for key in sorted(config.options):
        print(f"# {key} = {config.options[key]}", file=err)


def _resolve_code(spec: str) -> LinearCode:
    if spec.endswith(".alist") or "/" in spec:
        h = load_alist(Path(spec).read_bytes())
        g = generator_from_parity(h)
        return LinearCode(name=Path(spec).stem, n=h.shape[1],
                          k=h.shape[1] - h.shape[0], H=h, G=g)
    return code_by_name(spec)


def _make_decoder(spec: str, code: LinearCode, layers: int):
    """bpN | minsumN | ml | unfolded[:ckpt] | gandec[:ckpt]"""
    name, _, ckpt = spec.partition(":")
    if name == "ml":
        return MlDecoder(code)
    for prefix, variant in (("minsum", "min-sum"), ("bp", "sum-product")):
        if name.startswith(prefix):
            digits = name[len(prefix):]
            if digits and not digits.isdigit():
                break
            iterations = int(digits) if digits else 100
            return BpDecoder(code, iterations=iterations, variant=variant,
                             tag=name)
    if name in ("unfolded", "gandec"):
        dec = UnfoldedBpDecoder(code, n_layers=layers, tag=name)
        if ckpt:
            dec.weights_, _ = load_checkpoint(ckpt, code)
            dec.n_layers = dec.weights_.n_layers
            dec.mode = dec.weights_.mode
        return dec
    raise UsageError(f"unknown decoder spec {spec!r}")


def parse_snr_list(spec: str) -> list[float]:
    """'a:b:step' inclusive range, or comma-separated values."""
    spec = str(spec)
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise UsageError(f"bad SNR range {spec!r}, expected start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise UsageError("SNR step must be positive")
        out = []
        value = start
        while value <= stop + 1e-9:
            out.append(round(value, 10))
            value += step
        return out
    try:
        return [float(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"bad SNR list {spec!r}") from None


def _write_or_print(text: str, path: str | None):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def emit_plot_data(records: list[FerRecord], path: str) -> None:
    """Gnuplot blocks (one per decoder, blank-line separated) plus a .plt
    script with a log-scale FER axis. Zero FER values are floored at
    0.5/frames with an inline comment marker."""
    if not records:
        raise GandecError("no records to plot")
    tags = list(dict.fromkeys(r.decoder_tag for r in records))
    blocks = []
    for tag in tags:
        lines = [f"# decoder: {tag}"]
        for r in records:
            if r.decoder_tag != tag:
                continue
            if r.fer > 0:
                lines.append(f"{r.snr_db!r} {r.fer!r}")
            else:
                floor = 0.5 / r.frames
                lines.append(f"{r.snr_db!r} {floor!r} # fer=0 floored at 0.5/frames")
        blocks.append("\n".join(lines))
    Path(path).write_text("\n\n\n".join(blocks) + "\n")
    plt_path = Path(path).with_suffix(".plt")
    plots = ", \\\n     ".join(
        f"'{Path(path).name}' index {i} using 1:2 with linespoints title '{tag}'"
        for i, tag in enumerate(tags)
    )
    plt_path.write_text(
        "set logscale y\n"
        "set xlabel 'Eb/N0 (dB)'\n"
        "set ylabel 'FER'\n"
        "set grid\n"
        f"plot {plots}\n"
    )


def _read_llr_frames(path: str, n: int) -> np.ndarray:
    raw = np.fromfile(path, dtype="<f8")
    if raw.size == 0 or raw.size % n != 0:
        raise GandecError(
            f"LLR file holds {raw.size} values, not a positive multiple of n={n}"
        )
    return raw.reshape(-1, n)


# ---------------------------------------------------------------------------
# command implementations


def _cmd_code_info(config: RunConfig) -> int:
    code = _resolve_code(config["code"])
    g = code.graph
    print(f"name: {code.name}")
    print(f"n: {code.n}")
    print(f"k: {code.k}")
    print(f"rate: {code.k}/{code.n} = {code.rate:.4f}")
    print(f"edges: {g.n_edges}")
    print(f"check degrees: {sorted(set(len(a) for a in g.chk_adjacency))}")
    print(f"variable degrees: {sorted(set(len(a) for a in g.var_adjacency))}")
    if config["alist_out"]:
        Path(config["alist_out"]).write_text(save_alist(code.H))
        print(f"alist written to {config['alist_out']}")
    return 0


def _cmd_decode(config: RunConfig) -> int:
    code = _resolve_code(config["code"])
    if not config["llr_file"]:
        raise UsageError("decode requires --llr-file")
    frames = _read_llr_frames(config["llr_file"], code.n)
    decoder = _make_decoder(config["decoder"], code, layers=5)
    bits = decoder.predict(frames)
    syndromes = (bits.astype(np.int64) @ code.H.T.astype(np.int64)) % 2
    failures = int(syndromes.any(axis=1).sum())
    if config["bits_out"]:
        text = "\n".join("".join(str(b) for b in row) for row in bits) + "\n"
        Path(config["bits_out"]).write_text(text)
    print(f"frames: {frames.shape[0]}")
    print(f"parity_failures: {failures}")
    return 0


def _gan_config(config: RunConfig, lambda_sup: float) -> GanTrainConfig:
    return GanTrainConfig(
        lr=config["lr"],
        batch_size=config["batch"],
        n_train_frames=config.options.get("train_frames", 10_000),
        snr_train_db=config.options.get("snr_train", 4.0),
        lambda_sup=lambda_sup,
        lambda_adv=config["lambda_adv"],
        d_steps_per_g_step=config["d_steps"],
        generator_loss=config["gen_loss"],
        seed=config["seed"],
        epochs=config.options.get("epochs", 1),
        val_every=config.options.get("val_every", 0),
        val_frames=config.options.get("val_frames", 2000),
    )


def _cmd_train(config: RunConfig) -> int:
    code = _resolve_code(config["code"])
    decoder = UnfoldedBpDecoder(code, n_layers=config["layers"],
                                mode=config["mode"], seed=config["seed"])
    hidden = (config["disc_hidden"], config["disc_hidden"])
    disc = init_discriminator(code.n, hidden, Rng(config["seed"] ^ 0xD15C))
    cfg = _gan_config(config, lambda_sup=config["lambda_sup"])
    log = train_offline(decoder, disc, code, cfg)
    if config["log"]:
        Path(config["log"]).write_text(log.to_csv())
    if config["save"]:
        save_checkpoint(config["save"], decoder.ensure_weights(),
                         disc if cfg.lambda_adv > 0 else None)
        print(f"checkpoint written to {config['save']}")
    print(f"steps: {len(log.rows)}")
    if log.rows:
        print(f"final d_loss: {log.rows[-1].d_loss!r}")
        print(f"final g_sup_loss: {log.rows[-1].g_sup_loss!r}")
        print(f"final g_adv_loss: {log.rows[-1].g_adv_loss!r}")
    return 0


def _cmd_train_online(config: RunConfig) -> int:
    code = _resolve_code(config["code"])
    if not config["llr_file"]:
        raise UsageError("train-online requires --llr-file")
    frames = _read_llr_frames(config["llr_file"], code.n)
    decoder = UnfoldedBpDecoder(code, n_layers=config["layers"],
                                mode=config["mode"], seed=config["seed"])
    disc = None
    if config["warm_start"]:
        decoder.weights_, disc = load_checkpoint(config["warm_start"], code)
        decoder.n_layers = decoder.weights_.n_layers
        decoder.mode = decoder.weights_.mode
    if disc is None:
        hidden = (config["disc_hidden"], config["disc_hidden"])
        disc = init_discriminator(code.n, hidden, Rng(config["seed"] ^ 0xD15C))
    cfg = GanTrainConfig(
        lr=config["lr"], batch_size=config["batch"],
        n_train_frames=max(frames.shape[0], config["batch"]),
        snr_train_db=0.0, lambda_sup=0.0, lambda_adv=config["lambda_adv"],
        d_steps_per_g_step=config["d_steps"],
        generator_loss=config["gen_loss"], seed=config["seed"],
    )
    batch = config["batch"]
    max_steps = config["max_steps"]

    def source():
        count = frames.shape[0] // batch
        if max_steps:
            count = min(count, max_steps)
        for i in range(count):
            yield frames[i * batch: (i + 1) * batch]

    log = train_online(decoder, disc, code, cfg, source())
    if config["log"]:
        Path(config["log"]).write_text(log.to_csv())
    if config["save"]:
        save_checkpoint(config["save"], decoder.ensure_weights(), disc)
        print(f"checkpoint written to {config['save']}")
    print(f"steps: {len(log.rows)}")
    return 0


def _cmd_eval(config: RunConfig) -> int:
    code = _resolve_code(config["code"])
    decoder = _make_decoder(config["decoder"], code, layers=5)
    records = [
        estimate_fer(decoder, code, snr, config["frames"],
                     seed=config["seed"], workers=config["workers"])
        for snr in parse_snr_list(config["snr"])
    ]
    _write_or_print(fer_records_to_csv(records), config["out"])
    return 0


def _cmd_sweep(config: RunConfig) -> int:
    code = _resolve_code(config["code"])
    decoders = [
        _make_decoder(spec.strip(), code, layers=config["layers"])
        for spec in config["decoders"].split(",") if spec.strip()
    ]
    records = snr_sweep(decoders, code, parse_snr_list(config["snr"]),
                        config["frames"], seed=config["seed"],
                        workers=config["workers"])
    _write_or_print(fer_records_to_csv(records), config["out"])
    if config["plot_data"]:
        emit_plot_data(records, config["plot_data"])
    return 0


def _cmd_verify_theory(config: RunConfig) -> int:
    code = _resolve_code(config["code"])
    qc = quantized_awgn_channel(snr_db=config["snr_channel"], rate=code.rate,
                                n_levels=config["levels"])
    report = equilibrium_report(
        code, qc,
        mc_samples=config["mc_samples"],
        disc_steps=config["disc_steps"],
        eval_samples=config["eval_samples"],
        seed=config["seed"],
    )
    gap = abs(report.f_closed - report.target)
    print(f"target 2*log(1/2): {report.target:.6f}")
    print(f"f(G_ML, D_ML) from masses: {report.f_closed:.6f}  (gap {gap:.6f})")
    print(f"f(G_ML, D_ML) sampled: {report.f_closed_estimate.f_value:.6f} "
          f"+- {report.f_closed_estimate.std_error:.6f} "
          f"({report.f_closed_estimate.n_samples} samples)")
    print(f"f(G_ML, D_mlp) sampled: {report.f_trained.f_value:.6f} "
          f"+- {report.f_trained.std_error:.6f}")
    print(f"D_ML on codewords: min {report.d_ml_values.min():.4f} "
          f"max {report.d_ml_values.max():.4f}")
    bound = (report.f_closed_estimate.f_value
             + 3 * (report.f_trained.std_error
                    + report.f_closed_estimate.std_error))
    trained_ok = report.f_trained.f_value <= bound
    print(f"trained <= closed-form + 3 SE: {'yes' if trained_ok else 'NO'}")
    ok = gap <= config["tolerance"] and trained_ok
    print(f"equilibrium check: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def run(config: RunConfig) -> int:
    """Execute a resolved command; returns the process exit status."""
    _echo_config(config)
    handlers = {
        "code-info": _cmd_code_info,
        "decode": _cmd_decode,
        "train": _cmd_train,
        "train-online": _cmd_train_online,
        "eval": _cmd_eval,
        "sweep": _cmd_sweep,
        "verify-theory": _cmd_verify_theory,
    }
    return handlers[config.command](config)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_config(argv)
    except (UsageError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return run(config)
    except (UsageError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GandecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
