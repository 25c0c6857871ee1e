"""Command-line frontend.

A thin client over the HTTP service: every subcommand builds a request,
sends it either to an in-process app (default) or to a remote server
(--server URL), and prints the JSON response. Exit codes: 0 success,
1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
from pathlib import Path

DATA_ROOT_ENV = "EMAPROBE_DATA_ROOT"


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category

    @property
    def exit_code(self) -> int:
        return 2 if self.category == "io" else 1


class Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def parse_budget(text: str) -> float:
    """'20s' or '5m' or plain seconds; must be positive."""
    text = text.strip().lower()
    try:
        if text.endswith("m"):
            value = float(text[:-1]) * 60.0
        elif text.endswith("s"):
            value = float(text[:-1])
        else:
            value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse budget {text!r}")
    if value <= 0:
        raise argparse.ArgumentTypeError(f"budget must be positive, got {text!r}")
    return value


def parse_budget_list(text: str) -> list[float]:
    return [parse_budget(part) for part in text.split(",") if part.strip()]


def parse_layers(text: str) -> list[int]:
    """'0,3,7' or '0-12' or a mix of both."""
    layers: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                layers.extend(range(int(lo), int(hi) + 1))
            else:
                layers.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse layer list {text!r}")
    if not layers:
        raise argparse.ArgumentTypeError("empty layer list")
    return layers


def parse_float_list(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse number list {text!r}")


def parse_int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse integer list {text!r}")


def parse_name_list(text: str) -> list[str]:
    names = [p.strip() for p in text.split(",") if p.strip()]
    if not names:
        raise argparse.ArgumentTypeError("empty name list")
    return names


def parse_snr(text: str) -> float | None:
    if text.strip().lower() in ("inf", "none", "noiseless"):
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse snr {text!r}")


def _resolve_input(path: str | None) -> str | None:
    """Resolve a read path against the data-root env var as a fallback."""
    if path is None:
        return None
    p = Path(path)
    if p.is_absolute() or p.exists():
        return str(p)
    root = os.environ.get(DATA_ROOT_ENV)
    if root and (Path(root) / p).exists():
        return str(Path(root) / p)
    return str(p)


def _apply_config_file(args: argparse.Namespace) -> None:
    """Values in --config override command-line flags of the same name."""
    if not getattr(args, "config", None):
        return
    path = Path(_resolve_input(args.config))
    try:
        overrides = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError("io", f"cannot read config file {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise CliError("validation", f"config file {path} is not valid JSON: {exc}")
    if not isinstance(overrides, dict):
        raise CliError("validation", f"config file {path} must hold a JSON object")
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise CliError("validation", f"config file key {key!r} is not a known option")
        setattr(args, attr, value)


def _request(args: argparse.Namespace, path: str, payload: dict) -> dict:
    import httpx

    async def go() -> httpx.Response:
        if args.server:
            async with httpx.AsyncClient(base_url=args.server, timeout=None) as client:
                return await client.post(path, json=payload)
        from .service import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://engine", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    try:
        response = asyncio.run(go())
    except httpx.HTTPError as exc:
        raise CliError("io", f"cannot reach server: {exc}")
    try:
        body = response.json()
    except ValueError:
        raise CliError("io", f"malformed response (HTTP {response.status_code})")
    if response.status_code != 200:
        category = body.get("category", "validation") if isinstance(body, dict) else "validation"
        message = body.get("error", json.dumps(body)) if isinstance(body, dict) else str(body)
        raise CliError(category, message)
    return body


def _emit(body: dict) -> None:
    print(json.dumps(body, indent=2, sort_keys=True))


def _engine_payload(args: argparse.Namespace) -> dict:
    return {
        "manifest": _resolve_input(args.manifest),
        "representation": args.representation,
        "scoring": args.scoring,
        "norm_scope": args.norm_scope,
        "normalize_features": args.normalize_features,
        "split_policy": args.split_policy,
        "split_seed": args.split_seed,
        "frame_tolerance": args.frame_tolerance,
        "strict": args.strict,
        "jobs": args.jobs,
    }


def cmd_ingest(args) -> dict:
    return _request(
        args,
        "/ingest",
        {
            "root": _resolve_input(args.root),
            "corpus": args.corpus,
            "out_dir": args.out_dir,
            "mapping": _resolve_input(args.mapping),
            "target_hz": args.target_hz,
            "max_gap_frames": args.max_gap,
            "split_policy": args.split_policy,
            "split_seed": args.split_seed,
        },
    )


def cmd_synth(args) -> dict:
    return _request(
        args,
        "/synth",
        {
            "out_dir": args.out_dir,
            "dim": args.dim,
            "n_utts": args.n_utts,
            "utt_seconds": args.utt_seconds,
            "rate_hz": args.rate_hz,
            "snr": args.snr,
            "seed": args.seed,
            "n_test_utts": args.n_test_utts,
            "feature_noise_layers": args.layer_noise,
            "subjects": args.subjects,
            "subject_mode": args.subject_mode,
        },
    )


def cmd_probe(args) -> dict:
    payload = _engine_payload(args)
    payload.update(
        subject=args.subject,
        layer=args.layer,
        budget_seconds=args.budget,
        seed=args.seed,
        store=args.store,
    )
    return _request(args, "/probe", payload)


def cmd_sweep(args) -> dict:
    payload = _engine_payload(args)
    payload.update(subjects=args.subjects, layers=args.layers, seed=args.seed, store=args.store)
    return _request(args, "/sweep", payload)


def cmd_ablate(args) -> dict:
    payload = _engine_payload(args)
    payload.update(
        subjects=args.subjects,
        layer=args.layer,
        budgets=args.budgets,
        seeds=args.seeds if args.seeds else [args.seed],
        store=args.store,
    )
    return _request(args, "/ablate", payload)


def cmd_shared(args) -> dict:
    payload = _engine_payload(args)
    payload.update(subjects=args.subjects, layer=args.layer)
    return _request(args, "/shared", payload)


def cmd_loso(args) -> dict:
    payload = _engine_payload(args)
    payload.update(subjects=args.subjects, layer=args.layer)
    return _request(args, "/loso", payload)


def cmd_report(args) -> dict:
    return _request(
        args,
        "/report",
        {
            "store": _resolve_input(args.store),
            "kind": args.kind,
            "out": args.out,
            "format": args.format,
            "representation": args.representation,
            "layer": args.layer,
        },
    )


def cmd_serve(args) -> dict:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return {}


def build_parser() -> Parser:
    parser = Parser(prog="emaprobe", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file whose values override flags")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1, help="worker threads for cell grids")
    common.add_argument(
        "--out-dir", default=os.environ.get(DATA_ROOT_ENV, "."), help="output directory"
    )
    common.add_argument("--strict", action="store_true", help="fail on undefined correlations")
    common.add_argument("--server", help="base URL of a running service (default: in-process)")

    engine = argparse.ArgumentParser(add_help=False)
    engine.add_argument("--manifest", required=True, help="dataset manifest path")
    engine.add_argument("--representation", required=True, help="feature set name")
    engine.add_argument("--scoring", choices=["pooled", "per-utterance-mean"], default="pooled")
    engine.add_argument("--norm-scope", choices=["train-only", "all-data"], default="train-only")
    engine.add_argument("--normalize-features", action="store_true")
    engine.add_argument("--split-policy", choices=["tail", "seeded"], default="tail")
    engine.add_argument("--split-seed", type=int, default=0)
    engine.add_argument("--frame-tolerance", type=int, default=3)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="EST corpus tree to tensors + manifest")
    p.add_argument("--root", required=True, help="corpus root directory")
    p.add_argument("--corpus", choices=["mngu0", "mocha"], required=True)
    p.add_argument("--mapping", help="channel-mapping JSON overriding the corpus default")
    p.add_argument("--target-hz", type=float, default=50.0)
    p.add_argument("--max-gap", type=int, default=10, help="longest interpolable dropout, frames")
    p.add_argument("--split-policy", choices=["tail", "seeded"], default="tail")
    p.add_argument("--split-seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic oracle world")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--n-utts", type=int, default=20)
    p.add_argument("--utt-seconds", type=float, default=10.0)
    p.add_argument("--rate-hz", type=float, default=50.0)
    p.add_argument("--snr", type=parse_snr, default=None, help="target SNR; 'inf' = noiseless")
    p.add_argument("--n-test-utts", type=int, default=None)
    p.add_argument(
        "--layer-noise",
        type=parse_float_list,
        default=[0.0],
        help="comma list; one feature layer per entry at that noise level",
    )
    p.add_argument("--subjects", type=parse_name_list, default=["S1"])
    p.add_argument(
        "--subject-mode", choices=["clone", "iid", "distinct", "orthogonal"], default="iid"
    )
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("probe", parents=[common, engine], help="fit and score one probe cell")
    p.add_argument("--subject", required=True)
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--budget", type=parse_budget, default=None, help="e.g. 300, '300s', '5m'")
    p.add_argument("--store", help="grid store JSONL to append to")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("sweep", parents=[common, engine], help="layer sweep")
    p.add_argument("--subjects", type=parse_name_list, default=None)
    p.add_argument("--layers", type=parse_layers, required=True, help="e.g. '0-12' or '0,4,8'")
    p.add_argument("--store")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", parents=[common, engine], help="training-budget ablation")
    p.add_argument("--subjects", type=parse_name_list, default=None)
    p.add_argument("--layer", type=int, default=0)
    p.add_argument(
        "--budgets",
        type=parse_budget_list,
        required=True,
        help="comma list with s/m suffixes, e.g. '20s,30s,1m,5m,10m,20m'",
    )
    p.add_argument("--seeds", type=parse_int_list, default=None, help="comma list, e.g. '0,1,2'")
    p.add_argument("--store")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("shared", parents=[common, engine], help="one probe pooled over subjects")
    p.add_argument("--subjects", type=parse_name_list, default=None)
    p.add_argument("--layer", type=int, default=0)
    p.set_defaults(func=cmd_shared)

    p = sub.add_parser("loso", parents=[common, engine], help="leave-one-subject-out folds")
    p.add_argument("--subjects", type=parse_name_list, default=None)
    p.add_argument("--layer", type=int, default=0)
    p.set_defaults(func=cmd_loso)

    p = sub.add_parser("report", parents=[common], help="emit tables/series from a grid store")
    p.add_argument("--store", required=True)
    p.add_argument("--kind", choices=["table", "layers"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--representation", default=None)
    p.add_argument("--layer", type=int, default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        _apply_config_file(args)
        body = args.func(args)
    except CliError as exc:
        print(f"error ({exc.category}): {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130
    if args.command != "serve":
        _emit(body)
    return 0


if __name__ == "__main__":
    sys.exit(main())
