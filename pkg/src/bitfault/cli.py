"""Command-line front end: reproducible experiments from key=value configs.

Subcommands: characterize | quantize | campaign | dse | report.  Each takes a
single config file of ``key = value`` lines ('#' starts a comment).  Outputs
are CSV reports plus a structured-text run manifest; both embed the config
hash and tool version, carry no timestamps, and are byte-identical under the
same config and seeds.

Exit codes: 0 success, 2 config error, 3 data error, 4 no passing width.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io as _io
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .campaigns import weight_ber_campaign
from .errors import ConfigError, DataError, ModelLoadFailure, WorkbenchError
from .io import load_dataset, load_model, load_weight_manifest, save_quantized
from .metrics import PDropInputs, RapInputs, p_drop, rap
from .multipliers import EXACT, Exhaustive, Sampled, mare, parse_mult_config
from .network import PROT_MSB, PROT_NONE
from .quantize import protect_words, quantize, stored_width
from .search import SearchConfig, bitwidth_search, make_model_evaluator

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NO_PASSING_WIDTH = 4


# -- config handling ---------------------------------------------------------


def parse_config_text(text: str) -> dict[str, str]:
    cfg: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, value = (tok.strip() for tok in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {ln}: empty key")
        if key in cfg:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        cfg[key] = value
    return cfg


def load_config(path: str) -> tuple[dict[str, str], str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text), hashlib.sha256(text.encode()).hexdigest()


class Schema:
    """Typed accessors over a raw config dict; errors always name the key."""

    def __init__(self, cfg: dict[str, str], command: str):
        self.cfg = cfg
        self.command = command
        self.used: set[str] = set()

    def _raw(self, key: str, default=None, required=False):
        self.used.add(key)
        if key in self.cfg:
            return self.cfg[key]
        if required:
            raise ConfigError(f"{self.command}: missing required config key {key!r}")
        return default

    def _convert(self, key: str, raw: str, conv, kind: str):
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(
                f"{self.command}: config key {key!r} is not a valid {kind}: {raw!r}"
            ) from exc

    def string(self, key, default=None, required=False, choices=None):
        raw = self._raw(key, default, required)
        if raw is not None and choices is not None and raw not in choices:
            raise ConfigError(
                f"{self.command}: config key {key!r} must be one of {sorted(choices)}, got {raw!r}"
            )
        return raw

    def integer(self, key, default=None, required=False):
        raw = self._raw(key, default, required)
        return raw if raw is None or isinstance(raw, int) else self._convert(key, raw, int, "integer")

    def real(self, key, default=None, required=False):
        raw = self._raw(key, default, required)
        return raw if raw is None or isinstance(raw, float) else self._convert(key, raw, float, "number")

    def boolean(self, key, default=False):
        raw = self._raw(key, None)
        if raw is None:
            return default
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{self.command}: config key {key!r} is not a boolean: {raw!r}")

    def float_list(self, key, required=False, default=()):
        raw = self._raw(key, None, required)
        if raw is None:
            return tuple(default)
        return tuple(
            self._convert(key, tok.strip(), float, "number")
            for tok in raw.split(",")
            if tok.strip()
        )

    def string_list(self, key, required=False, default=(), sep=","):
        raw = self._raw(key, None, required)
        if raw is None:
            return tuple(default)
        return tuple(tok.strip() for tok in raw.split(sep) if tok.strip())

    def path(self, key, required=False, default=None):
        raw = self._raw(key, default, required)
        return None if raw is None else Path(raw)

    def reject_unknown(self):
        unknown = sorted(set(self.cfg) - self.used)
        if unknown:
            raise ConfigError(
                f"{self.command}: unknown config key {unknown[0]!r}"
                + (f" (and {len(unknown) - 1} more)" if len(unknown) > 1 else "")
            )


# -- provenance --------------------------------------------------------------


def _provenance(config_hash: str) -> str:
    return f"# bitfault {__version__} config_sha256={config_hash}\n"


def _write_manifest(out_csv: Path, command: str, config_path: str, config_hash: str, outputs):
    manifest = out_csv.with_suffix(out_csv.suffix + ".manifest.txt")
    lines = [
        "bitfault-run-manifest",
        f"version = {__version__}",
        f"command = {command}",
        f"config = {config_path}",
        f"config_sha256 = {config_hash}",
    ]
    lines += [f"output = {p}" for p in outputs]
    manifest.write_text("\n".join(lines) + "\n")


def _write_csv(path: Path, header, rows, config_hash: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = _io.StringIO()
    buf.write(_provenance(config_hash))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


# -- subcommands -------------------------------------------------------------


def cmd_characterize(config_path: str) -> int:
    cfg, chash = load_config(config_path)
    sc = Schema(cfg, "characterize")
    labels = sc.string_list("configs", required=True, sep=";")
    policy_name = sc.string("policy", required=True, choices={"sampled", "exhaustive"})
    samples = sc.integer("samples", default=1_000_000)
    seed = sc.integer("seed", required=True)
    out = sc.path("out", required=True)
    sc.reject_unknown()

    rows = []
    for label in labels:
        try:
            mc = parse_mult_config(label)
        except ValueError as exc:
            raise ConfigError(f"characterize: config key 'configs': {exc}") from exc
        policy = Exhaustive() if policy_name == "exhaustive" else Sampled(samples, seed)
        value = mare(mc, policy)
        n_pairs = ((1 << mc.n) - 1) ** 2 if policy_name == "exhaustive" else samples
        rows.append(
            [
                mc.family,
                mc.n,
                mc.t if mc.family != EXACT else "",
                mc.h if mc.family == "adam" else "",
                policy_name,
                n_pairs,
                seed,
                f"{value:.4f}",
            ]
        )
    header = ["family", "n", "t", "h", "policy", "samples", "seed", "mare_percent"]
    _write_csv(out, header, rows, chash)
    _write_manifest(out, "characterize", config_path, chash, [out])
    return EXIT_OK


def cmd_quantize(config_path: str) -> int:
    cfg, chash = load_config(config_path)
    sc = Schema(cfg, "quantize")
    weights_path = sc.path("weights", required=True)
    bits = sc.integer("bits", required=True)
    protected = sc.boolean("protect", default=False)
    out_dir = sc.path("out_dir", required=True)
    sc.reject_unknown()

    tensors = load_weight_manifest(weights_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    summary_rows = []
    for tname in sorted(tensors):
        codes, scheme = quantize(tensors[tname], bits)
        stored = protect_words(codes, bits) if protected else codes
        data_path, meta_path = save_quantized(out_dir / tname, stored, scheme, protected)
        outputs += [data_path, meta_path]
        summary_rows.append(
            [
                tname,
                codes.size,
                bits,
                repr(scheme.scale),
                int(protected),
                codes.size * stored_width(bits, protected),
            ]
        )
    out_csv = out_dir / "quantize_report.csv"
    _write_csv(
        out_csv,
        ["tensor", "params", "bits", "scale", "protected", "memory_bits"],
        summary_rows,
        chash,
    )
    _write_manifest(out_csv, "quantize", config_path, chash, outputs + [out_csv])
    return EXIT_OK


def cmd_campaign(config_path: str) -> int:
    cfg, chash = load_config(config_path)
    sc = Schema(cfg, "campaign")
    model_path = sc.path("model", required=True)
    dataset_path = sc.path("dataset", required=True)
    bers = sc.float_list("bers", required=True)
    n_seeds = sc.integer("seeds", required=True)
    base_seed = sc.integer("base_seed", required=True)
    protections = sc.string_list("protections", default=("none", "msb"))
    lifetime = sc.real("lifetime", default=1.0)
    test_interval = sc.real("test_interval", default=1.0)
    p_single = sc.real("p_single", default=1e-9)
    perf_none = sc.real("perf_overhead_none", default=1.0)
    perf_msb = sc.real("perf_overhead_msb", default=1.0)
    out = sc.path("out", required=True)
    sc.reject_unknown()
    for prot in protections:
        if prot not in (PROT_NONE, PROT_MSB):
            raise ConfigError(
                f"campaign: config key 'protections' must list none/msb, got {prot!r}"
            )

    model = load_model(model_path)
    X, y = load_dataset(dataset_path)
    baseline_bits = model.param_count() * 8
    perf_ovh = {PROT_NONE: perf_none, PROT_MSB: perf_msb}

    rows = []
    for prot in protections:
        variant = model.with_protection(prot).prepare()
        mem_bits = variant.memory_bits()
        for ber in bers:
            records = weight_ber_campaign(
                variant,
                X,
                y,
                ber=ber,
                seeds=range(base_seed, base_seed + n_seeds),
                protection_label=prot,
            )
            for rec in records:
                vuln = rec.vulnerability_pp
                pd = p_drop(
                    PDropInputs(
                        param_count=model.param_count(),
                        bit_width=model.weight_bits,
                        lifetime=lifetime,
                        test_interval=test_interval,
                        p_single=p_single,
                        ber=ber,
                        acc_drop=vuln,
                    )
                )
                rp = rap(
                    RapInputs(
                        acc_drop=rec.golden_accuracy - rec.faulty_accuracy,
                        mem_overhead=mem_bits / baseline_bits,
                        perf_overhead=perf_ovh[prot],
                    )
                )
                rows.append(
                    [
                        f"{ber:g}",
                        rec.seed,
                        prot,
                        f"{rec.golden_accuracy:.6f}",
                        f"{rec.faulty_accuracy:.6f}",
                        f"{vuln:.4f}",
                        f"{rec.sdc.sdc1:.4f}",
                        f"{rec.sdc.sdc10:.4f}",
                        f"{100.0 - rec.sdc.sdc1:.4f}",
                        mem_bits,
                        f"{pd:.6e}",
                        f"{rp:.6e}",
                    ]
                )
    header = [
        "ber",
        "seed",
        "protection",
        "golden_acc",
        "faulty_acc",
        "vulnerability",
        "sdc1",
        "sdc10",
        "fault_coverage",
        "memory_bits",
        "p_drop",
        "rap",
    ]
    _write_csv(out, header, rows, chash)
    _write_manifest(out, "campaign", config_path, chash, [out])
    return EXIT_OK


def cmd_dse(config_path: str) -> int:
    cfg, chash = load_config(config_path)
    sc = Schema(cfg, "dse")
    model_path = sc.path("model", required=True)
    dataset_path = sc.path("dataset", required=True)
    acc_threshold = sc.real("accuracy_threshold", required=True)
    drop_threshold = sc.real("drop_threshold_pp", required=True)
    min_bits = sc.integer("min_bits", default=2)
    max_bits = sc.integer("max_bits", default=8)
    bers = sc.float_list("bers", required=True)
    seeds_per_ber = sc.integer("seeds_per_ber", default=10)
    base_seed = sc.integer("base_seed", required=True)
    out_trace = sc.path("out_trace", required=True)
    out_summary = sc.path("out_summary", required=True)
    sc.reject_unknown()

    model = load_model(model_path)
    X, y = load_dataset(dataset_path)
    try:
        search_cfg = SearchConfig(
            accuracy_threshold=acc_threshold,
            drop_threshold_pp=drop_threshold,
            width_range=(min_bits, max_bits),
            ber_grid=bers,
            seeds_per_ber=seeds_per_ber,
            base_seed=base_seed,
        )
    except ValueError as exc:
        raise ConfigError(f"dse: {exc}") from exc
    trace = bitwidth_search(search_cfg, make_model_evaluator(model, X, y, search_cfg))
    out_trace.parent.mkdir(parents=True, exist_ok=True)
    out_trace.write_text(_provenance(chash) + trace.to_csv(search_cfg.ber_grid))
    out_summary.parent.mkdir(parents=True, exist_ok=True)
    out_summary.write_text(_provenance(chash) + trace.summary_text())
    _write_manifest(out_trace, "dse", config_path, chash, [out_trace, out_summary])
    return EXIT_OK if trace.selected is not None else EXIT_NO_PASSING_WIDTH


def cmd_report(config_path: str) -> int:
    cfg, chash = load_config(config_path)
    sc = Schema(cfg, "report")
    campaign_csv = sc.path("campaign", required=True)
    out = sc.path("out", required=True)
    sc.reject_unknown()

    try:
        lines = campaign_csv.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read campaign report {campaign_csv}: {exc}") from exc
    body = [ln for ln in lines if not ln.startswith("#")]
    reader = csv.DictReader(body)
    groups: dict[tuple[str, str], list[dict]] = {}
    for row in reader:
        groups.setdefault((row["ber"], row["protection"]), []).append(row)
    if not groups:
        raise DataError(f"campaign report {campaign_csv} has no rows")

    rows = []
    for (ber, prot), cells in sorted(groups.items()):
        vuln = np.array([float(c["vulnerability"]) for c in cells])
        rows.append(
            [
                ber,
                prot,
                len(cells),
                f"{float(np.mean([float(c['golden_acc']) for c in cells])):.6f}",
                f"{float(np.mean([float(c['faulty_acc']) for c in cells])):.6f}",
                f"{vuln.mean():.4f}",
                f"{vuln.std(ddof=1) if len(cells) > 1 else 0.0:.4f}",
                f"{float(np.mean([float(c['sdc1']) for c in cells])):.4f}",
                f"{float(np.mean([float(c['sdc10']) for c in cells])):.4f}",
                f"{float(np.mean([float(c['fault_coverage']) for c in cells])):.4f}",
            ]
        )
    header = [
        "ber",
        "protection",
        "cells",
        "mean_golden_acc",
        "mean_faulty_acc",
        "mean_vulnerability",
        "std_vulnerability",
        "mean_sdc1",
        "mean_sdc10",
        "mean_fault_coverage",
    ]
    _write_csv(out, header, rows, chash)
    _write_manifest(out, "report", config_path, chash, [out])
    return EXIT_OK


_COMMANDS = {
    "characterize": cmd_characterize,
    "quantize": cmd_quantize,
    "campaign": cmd_campaign,
    "dse": cmd_dse,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bitfault",
        description="Fault-tolerance workbench for quantized DNN arithmetic",
    )
    parser.add_argument("--version", action="version", version=f"bitfault {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment from a config file")
        p.add_argument("config", help="key=value experiment config")
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ModelLoadFailure, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except WorkbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
