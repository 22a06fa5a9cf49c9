"""Command-line entry point: ``setwise-rerank {rerank,bench,eval,synth}``.

Experiment settings can live in a TOML file (``--config``); any flag given
on the command line overrides the file.  A minimal bench manifest::

    mode = "simulate"
    reps = 3
    seed = 7
    tau_target = 0.8

    [synth]
    n_queries = 100
    n_docs = 100

    [noise]
    temperature = 0.5

    [defaults]
    k = 10
    set_size = 3

    [[methods]]
    method = "setwise_heapsort"

    [[methods]]
    method = "setwise_insertion"
    use_prior = true

Exit codes: 0 success, 2 configuration error, 3 data error, 4 oracle or
transport error, 1 anything else raised by the package.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Mapping, Sequence

from .client import EndpointConfig
from .core import METHODS, AlgorithmConfig
from .errors import ConfigError, DataError, RerankError
from .harness import MODES, SIMULATE, RunSpec, cmd_bench, cmd_eval, cmd_rerank
from .oracle import NoiseModel
from .synth import DEFAULT_FRACTIONS, SynthConfig, generate, tau_target_calibrate, write_world

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

log = logging.getLogger("setwise_rerank")

# flags that override the matching field of every method config
METHOD_FLAGS = ("k", "set_size", "use_prior", "compare_mode", "window", "step", "passes", "early_exit")
NOISE_FIELDS = {"temperature", "uncertainty_threshold", "flip_to_prior_prob"}
TOP_LEVEL_KEYS = {
    "mode", "methods", "method", "defaults", "synth", "noise", "endpoint", "run", "qrels", "corpus",
    "queries", "reps", "out", "seed", "workers", "tau_target", "eval_k",
}


def load_config(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    unknown = set(doc) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(sorted(unknown))}")
    return doc


def _table(doc: Mapping[str, Any], key: str) -> dict[str, Any]:
    value = doc.get(key, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"[{key}] must be a table")
    return dict(value)


def _method_entries(doc: Mapping[str, Any], flag_methods: Sequence[str] | None) -> list[dict[str, Any]]:
    if flag_methods:
        return [{"method": m} for m in flag_methods]
    raw = doc.get("methods", doc.get("method", []))
    if isinstance(raw, (str, Mapping)):
        raw = [raw]
    entries = []
    for item in raw:
        if isinstance(item, str):
            entries.append({"method": item})
        elif isinstance(item, Mapping):
            entries.append(dict(item))
        else:
            raise ConfigError(f"method entries must be names or tables, got {item!r}")
    return entries


def build_spec(args: argparse.Namespace) -> RunSpec:
    """Merge the TOML file (if any) with command-line flags into a RunSpec."""
    doc = load_config(getattr(args, "config", None))

    def pick(flag: str, key: str | None = None, default: Any = None) -> Any:
        value = getattr(args, flag, None)
        if value is not None:
            return value
        return doc.get(key or flag, default)

    seed = int(pick("seed", default=0))
    defaults = _table(doc, "defaults")
    overrides = {f: getattr(args, f) for f in METHOD_FLAGS if getattr(args, f, None) is not None}
    methods = []
    for entry in _method_entries(doc, getattr(args, "method", None)):
        merged = {"rng_seed": seed, **defaults, **entry, **overrides}
        if getattr(args, "seed", None) is not None:
            merged["rng_seed"] = seed
        try:
            methods.append(AlgorithmConfig.from_dict(merged))
        except TypeError as exc:
            raise ConfigError(f"bad method entry {entry!r}: {exc}") from None

    synth = None
    synth_doc = _table(doc, "synth")
    synth_flags = {
        "n_queries": getattr(args, "n_queries", None),
        "n_docs": getattr(args, "n_docs", None),
        "initial_noise": getattr(args, "sigma", None),
        "doc_tokens": getattr(args, "doc_tokens", None),
    }
    if synth_doc or any(v is not None for v in synth_flags.values()):
        synth_doc.setdefault("rng_seed", seed)
        synth_doc.update({k: v for k, v in synth_flags.items() if v is not None})
        synth = _synth_config(synth_doc)

    noise_doc = _table(doc, "noise")
    unknown = set(noise_doc) - NOISE_FIELDS - {"perfect"}
    if unknown:
        raise ConfigError(f"[noise]: unknown key(s) {', '.join(sorted(unknown))}")
    for flag, key in (("temperature", "temperature"), ("uncertainty", "uncertainty_threshold"), ("flip", "flip_to_prior_prob")):
        if getattr(args, flag, None) is not None:
            noise_doc[key] = getattr(args, flag)
    perfect = bool(getattr(args, "perfect", False) or noise_doc.pop("perfect", False))
    noise = None
    if noise_doc and not perfect:
        try:
            noise = NoiseModel(**noise_doc)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    endpoint = None
    ep_doc = _table(doc, "endpoint")
    for flag, key in (("endpoint_url", "base_url"), ("model", "model_name"), ("timeout", "timeout"), ("max_retries", "max_retries")):
        if getattr(args, flag, None) is not None:
            ep_doc[key] = getattr(args, flag)
    if getattr(args, "logits", None) is not None:
        ep_doc["logit_access"] = args.logits
    if ep_doc:
        valid = {f.name for f in fields(EndpointConfig)}
        unknown = set(ep_doc) - valid
        if unknown:
            raise ConfigError(f"[endpoint]: unknown key(s) {', '.join(sorted(unknown))}")
        endpoint = EndpointConfig(**ep_doc)

    tau_target = pick("tau_target")
    return RunSpec(
        mode=pick("mode", default=SIMULATE),
        methods=methods,
        synth=synth,
        tau_target=float(tau_target) if tau_target is not None else None,
        run_path=pick("run"),
        qrels_path=pick("qrels"),
        corpus_path=pick("corpus"),
        queries_path=pick("queries"),
        reps=int(pick("reps", default=3)),
        out_dir=str(pick("out", default="out")),
        seed=seed,
        workers=int(pick("workers", default=0)),
        noise=noise,
        endpoint=endpoint,
        eval_k=int(pick("eval_k", default=10)),
    ).validate()


def _synth_config(d: Mapping[str, Any]) -> SynthConfig:
    valid = {f.name for f in fields(SynthConfig)}
    unknown = set(d) - valid
    if unknown:
        raise ConfigError(f"[synth]: unknown key(s) {', '.join(sorted(unknown))}")
    return SynthConfig(**d)


def _fractions(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated probabilities, got {text!r}") from None


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML experiment manifest; flags override it")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--method", action="append", choices=METHODS, help="repeat for several methods")
    p.add_argument("--k", type=int, help="top-k to return (default 10)")
    p.add_argument("--set-size", dest="set_size", type=int, help="documents per setwise call (default 3)")
    p.add_argument("--prior", dest="use_prior", action=argparse.BooleanOptionalAction, default=None,
                   help="present documents with prior evidence first and ask for the first-position bias")
    p.add_argument("--compare-mode", dest="compare_mode", choices=("max_compare", "sort_compare"))
    p.add_argument("--window", type=int, help="listwise window (default 4)")
    p.add_argument("--step", type=int, help="listwise step (default 2)")
    p.add_argument("--passes", type=int, help="listwise passes (default 5)")
    p.add_argument("--early-exit", dest="early_exit", action=argparse.BooleanOptionalAction, default=None,
                   help="bubblesort: reuse verdicts for windows already judged (default on)")
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int, help="repetitions for bench (default 3)")
    p.add_argument("--workers", type=int, help="query worker threads (default: CPU count)")
    p.add_argument("--out", help="output directory (default ./out)")
    p.add_argument("--eval-k", dest="eval_k", type=int, help="NDCG cutoff for bench (default 10)")
    data = p.add_argument_group("data")
    data.add_argument("--run", help="first-stage TREC run file")
    data.add_argument("--qrels", help="TREC qrels (simulate-mode grades, and NDCG)")
    data.add_argument("--corpus", help="JSONL corpus with doc_id and text")
    data.add_argument("--queries", help="tab-separated qid/text topics file")
    data.add_argument("--n-queries", dest="n_queries", type=int, help="synthetic world: number of queries")
    data.add_argument("--n-docs", dest="n_docs", type=int, help="synthetic world: documents per query")
    data.add_argument("--sigma", type=float, help="synthetic world: first-stage noise")
    data.add_argument("--doc-tokens", dest="doc_tokens", type=int, help="synthetic world: placeholder text length")
    data.add_argument("--tau-target", dest="tau_target", type=float,
                      help="calibrate the synthetic noise to this agreement with truth")
    sim = p.add_argument_group("simulated oracle")
    sim.add_argument("--perfect", action="store_true", help="noise-free oracle even if the config sets noise")
    sim.add_argument("--temperature", type=float, help="Plackett-Luce temperature")
    sim.add_argument("--uncertainty", type=float, help="confidence below which the prior bias may apply")
    sim.add_argument("--flip", type=float, help="probability of answering position 0 when uncertain")
    live = p.add_argument_group("live endpoint")
    live.add_argument("--endpoint-url", dest="endpoint_url")
    live.add_argument("--model")
    live.add_argument("--timeout", type=float)
    live.add_argument("--max-retries", dest="max_retries", type=int)
    live.add_argument("--logits", action=argparse.BooleanOptionalAction, default=None,
                      help="endpoint returns per-label log-probabilities")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="setwise-rerank", description="LLM-style top-k reranking toolkit")
    parser.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rerank", help="rerank a first-stage run; writes <method>.run and <method>.ledger.csv")
    _add_run_options(p)

    p = sub.add_parser("bench", help="compare methods over repetitions; writes bench.csv/.txt and inputs")
    _add_run_options(p)

    p = sub.add_parser("eval", help="NDCG@k of a run file against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--label", default="run", help="method name written to the CSV")
    p.add_argument("--out", help="metric CSV path (printed summary only when omitted)")

    p = sub.add_parser("synth", help="write a synthetic world as run, qrels, corpus and topics files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-queries", dest="n_queries", type=int, default=50)
    p.add_argument("--n-docs", dest="n_docs", type=int, default=100)
    p.add_argument("--fractions", type=_fractions, default=DEFAULT_FRACTIONS,
                   help="grade probabilities, lowest grade first (default 0.6,0.2,0.12,0.08)")
    p.add_argument("--sigma", type=float, default=1.0, help="first-stage noise")
    p.add_argument("--tau-target", dest="tau_target", type=float, help="calibrate sigma to this agreement")
    p.add_argument("--doc-tokens", dest="doc_tokens", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _run(args: argparse.Namespace) -> int:
    if args.command == "rerank":
        spec = build_spec(args)
        for name, path in cmd_rerank(spec).items():
            print(f"{name}\t{path}")
    elif args.command == "bench":
        spec = build_spec(args)
        paths = cmd_bench(spec)
        sys.stdout.write(Path(paths["bench.txt"]).read_text(encoding="utf-8"))
    elif args.command == "eval":
        report = cmd_eval(args.run, args.qrels, args.k, args.out, args.label)
        metric = f"ndcg@{args.k}"
        flag = "  (single query: CI not estimable)" if report.zero_width else ""
        print(f"{report.method}\t{metric}\t{report.mean[metric]:.4f} ± {report.ci[metric]:.4f}"
              f"\t{len(report.per_query)} queries{flag}")
    elif args.command == "synth":
        cfg = SynthConfig(
            n_queries=args.n_queries, n_docs=args.n_docs, grade_levels=len(args.fractions),
            relevant_fraction=args.fractions, initial_noise=args.sigma, rng_seed=args.seed,
            doc_tokens=args.doc_tokens,
        )
        if args.tau_target is not None:
            cfg = cfg.with_noise(tau_target_calibrate(args.tau_target, cfg))
        world = generate(cfg)
        for name, path in write_world(world, args.out).items():
            print(f"{name}\t{path}")
        print(f"sigma\t{cfg.initial_noise!r}\nmean_tau\t{world.mean_tau():.4f}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return _run(args)
    except RerankError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        err = DataError(f"{exc.filename or ''}: {exc.strerror or exc}")
        print(f"error: {type(exc).__name__}: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
