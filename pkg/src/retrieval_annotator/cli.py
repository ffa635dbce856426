"""``rannot`` command line.

Option values resolve as: command-line flag > ``RANNOT_<COMMAND>_<OPTION>``
environment variable > ``--config`` JSON file (``{"<command>": {...}}``) >
built-in default. Commands that write an output file also write
``<out>.manifest.json`` recording the resolved configuration and input/output
digests. Errors are reported as one JSON line on stderr and a per-family
exit code.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import click

from . import __version__
from .annotator import AnnotatorConfig, TrainingCorpusIndex, predict_batch
from .audit import audit_predictions
from .core import DocumentRecord, PredictionSet, Taxonomy
from .cost import PRESETS, comparison_table, cost_report
from .dataset_io import (
    SplitSpec,
    corpus_stats,
    dump_jsonl,
    load_documents,
    load_taxonomy,
    write_documents,
    write_taxonomy,
)
from .errors import AnnotatorError, MalformedLine
from .gateway import ENV_MODEL, ENV_URL, EmbeddingCache, RemoteEmbedder, VectorFileSource, write_vector_file
from .label_index import build_index, load_index, save_index
from .metrics import evaluate
from .scaling import run_scaling, scaling_table
from .tuner import TuningSpec, tune_k

logger = logging.getLogger("retrieval_annotator")

IO_ERROR_EXIT = 9


# -- helpers -------------------------------------------------------------------


def _sha256_path(path: Path) -> str:
    h = hashlib.sha256()
    files = sorted(p for p in path.rglob("*") if p.is_file() and p.name != "manifest.json") if path.is_dir() else [path]
    for f in files:
        if path.is_dir():
            h.update(str(f.relative_to(path)).encode("utf-8") + b"\0")
        h.update(f.read_bytes())
    return h.hexdigest()


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc) if epoch else dt.datetime.now(dt.timezone.utc)
    return when.isoformat(timespec="seconds")


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_manifest(ctx: click.Context, out: Path, started: str, seed: int | None = None) -> Path:
    """Record command, resolved options, digests of inputs and outputs."""
    inputs = {}
    for name, value in sorted(ctx.params.items()):
        if name == "out" or not isinstance(value, (str, Path)):
            continue
        p = Path(value)
        if p.exists():
            inputs[str(value)] = _sha256_path(p)
    body = {
        "command": ctx.info_name,
        "config": {k: _jsonable(v) for k, v in sorted(ctx.params.items())},
        "inputs": inputs,
        "outputs": {str(out): _sha256_path(out)},
        "seed": seed,
        "tool_version": __version__,
    }
    body["digest"] = hashlib.sha256(json.dumps(body, sort_keys=True).encode("utf-8")).hexdigest()
    body["started_at"] = started
    body["finished_at"] = _timestamp()
    target = out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")
    target.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return target


def _write_json(path: Path, obj: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    return path


def _embedder(service: str, model: str, cache_dir: Path | None, retries: int, batch_size: int = 32) -> RemoteEmbedder:
    cache = EmbeddingCache(cache_dir) if cache_dir else EmbeddingCache()
    return RemoteEmbedder.from_env(service, model, cache=cache, max_retries=retries, batch_size=batch_size)


def _attach(docs: list[DocumentRecord], vectors: Path | None, service: str | None, model: str, cache_dir, retries) -> list[DocumentRecord]:
    if vectors is not None:
        vecs = VectorFileSource(vectors).lookup(d.id for d in docs)
    elif service:
        vecs = _embedder(service, model, cache_dir, retries).embed_texts([d.text for d in docs])
    else:
        raise click.UsageError("document embeddings need --*-vectors or --service")
    return [d.with_embedding(v) for d, v in zip(docs, vecs)]


def _parse_grid(text: str) -> tuple[int, ...]:
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise click.BadParameter(f"cannot parse k grid {text!r}", param_hint="--k-grid") from None
    return tuple(out)


def _parse_sizes(text: str) -> list[int | None]:
    try:
        return [None if s.strip() == "full" else int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise click.BadParameter(f"cannot parse sizes {text!r}", param_hint="--sizes") from None


service_opts = [
    click.option("--service", envvar=ENV_URL, default=None, help=f"Embedding service base URL (env {ENV_URL})."),
    click.option("--model", envvar=ENV_MODEL, default="default", show_default=True, help="Embedding model name."),
    click.option("--cache-dir", type=click.Path(path_type=Path), default=None, help="Persistent embedding cache."),
    click.option("--retries", type=int, default=3, show_default=True, help="Retries on transient service failures."),
]


def with_service(f):
    for opt in reversed(service_opts):
        f = opt(f)
    return f


class AnnotatorGroup(click.Group):
    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except AnnotatorError as exc:
            _fail(ctx, type(exc).__name__, str(exc), exc.exit_code)
        except OSError as exc:
            _fail(ctx, "IoError", str(exc), IO_ERROR_EXIT)
        except ValueError as exc:
            # parameter checks in config objects (grids, fractions, strategies)
            _fail(ctx, "InputValidationError", str(exc), 3)


def _fail(ctx: click.Context, family: str, message: str, code: int):
    click.echo(json.dumps({"error": family, "message": message, "exit_code": code}), err=True)
    ctx.exit(code)


# -- commands -------------------------------------------------------------------


@click.group(cls=AnnotatorGroup, context_settings={"auto_envvar_prefix": "RANNOT"})
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--log-level", default="WARNING", show_default=True)
@click.version_option(__version__, prog_name="rannot")
@click.pass_context
def cli(ctx: click.Context, config_file: Path | None, log_level: str):
    """Closed-vocabulary multi-label annotation by embedding retrieval."""
    logging.basicConfig(level=log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if config_file is not None:
        ctx.default_map = json.loads(config_file.read_text(encoding="utf-8"))


@cli.command("index-build")
@click.argument("taxonomy_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--label-vectors", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@with_service
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.pass_context
def index_build(ctx, taxonomy_file, label_vectors, service, model, cache_dir, retries, out):
    """Embed label descriptions and write a searchable index directory."""
    started = _timestamp()
    taxonomy = load_taxonomy(taxonomy_file)
    if label_vectors is not None:
        vecs = VectorFileSource(label_vectors).lookup(taxonomy.ids)
    elif service:
        vecs = _embedder(service, model, cache_dir, retries).embed_texts([e.description for e in taxonomy])
    else:
        raise click.UsageError("need --label-vectors or --service")
    taxonomy = Taxonomy((e.with_embedding(v) for e, v in zip(taxonomy, vecs)), taxonomy.version)
    index = build_index(taxonomy)
    save_index(index, taxonomy, out)
    write_manifest(ctx, out, started)
    K, dim, version = index.stats
    click.echo(f"index: K={K} dim={dim} version={version} -> {out}")


@cli.command()
@click.option("--index", "index_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--docs", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--doc-vectors", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--strategy", type=click.Choice(["label_similarity", "neighbor_vote"]), default="label_similarity", show_default=True)
@click.option("--train-docs", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--train-vectors", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--vote-neighbors", type=int, default=10, show_default=True)
@click.option("--threshold", type=float, default=None, help="Keep labels scoring at least this (at most k).")
@click.option("--lenient", is_flag=True, help="Skip failing documents instead of aborting.")
@with_service
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.pass_context
def predict(ctx, index_dir, docs, doc_vectors, k, strategy, train_docs, train_vectors, vote_neighbors, threshold, lenient, service, model, cache_dir, retries, out):
    """Predict label sets and write predictions.jsonl."""
    started = _timestamp()
    index, taxonomy = load_index(index_dir)
    records = _attach(load_documents(docs), doc_vectors, service, model, cache_dir, retries)
    cfg = AnnotatorConfig(strategy, k, vote_neighbors, threshold)
    if strategy == "neighbor_vote":
        if train_docs is None:
            raise click.UsageError("neighbor_vote needs --train-docs")
        train = _attach(load_documents(train_docs, taxonomy), train_vectors, service, model, cache_dir, retries)
        target = TrainingCorpusIndex(train, taxonomy)
    else:
        target = index
    result = predict_batch([(d.id, d.embedding) for d in records], target, cfg, strict=not lenient)
    dump_jsonl(out, (p.to_json() for p in result.predictions))
    for err in result.errors:
        click.echo(json.dumps({"error": type(err.error).__name__, "doc_id": err.doc_id, "message": str(err.error)}), err=True)
    write_manifest(ctx, out, started)
    click.echo(f"predicted {len(result.predictions)} documents ({len(result.errors)} failed) -> {out}")


@cli.command()
@click.option("--index", "index_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--val-docs", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--val-vectors", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--k-grid", default="1-20", show_default=True, help="Comma list and/or ranges, e.g. 1-5,10,20.")
@click.option("--objective", type=click.Choice(["micro", "macro"]), default="micro", show_default=True)
@click.option("--strategy", type=click.Choice(["label_similarity", "neighbor_vote"]), default="label_similarity", show_default=True)
@click.option("--train-docs", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--train-vectors", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--vote-neighbors", type=int, default=10, show_default=True)
@with_service
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_context
def tune(ctx, index_dir, val_docs, val_vectors, k_grid, objective, strategy, train_docs, train_vectors, vote_neighbors, service, model, cache_dir, retries, out):
    """Select k on a validation split by maximizing F1."""
    started = _timestamp()
    index, taxonomy = load_index(index_dir)
    val = _attach(load_documents(val_docs, taxonomy), val_vectors, service, model, cache_dir, retries)
    spec = TuningSpec(_parse_grid(k_grid), objective, strategy, vote_neighbors)
    if strategy == "neighbor_vote":
        if train_docs is None:
            raise click.UsageError("neighbor_vote needs --train-docs")
        train = _attach(load_documents(train_docs, taxonomy), train_vectors, service, model, cache_dir, retries)
        target = TrainingCorpusIndex(train, taxonomy)
    else:
        target = index
    report = tune_k(val, target, spec)
    click.echo(report.table())
    click.echo(f"best k = {report.best_k}")
    if out is not None:
        _write_json(out, report.to_json())
        write_manifest(ctx, out, started)


@cli.command("evaluate")
@click.option("--preds", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--gold", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--taxonomy", "taxonomy_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--macro-average", type=click.Choice(["support", "taxonomy"]), default="support", show_default=True)
@click.option("--name", default="model")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_context
def evaluate_cmd(ctx, preds, gold, taxonomy_file, macro_average, name, out):
    """Micro/macro F1 of a predictions file against gold labels."""
    from .dataset_io import iter_jsonl

    started = _timestamp()
    taxonomy = load_taxonomy(taxonomy_file)
    gold_docs = load_documents(gold, taxonomy)
    pred_sets = []
    for line_no, obj in iter_jsonl(preds):
        try:
            pred_sets.append(PredictionSet.from_json(obj))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedLine(line_no, str(exc)) from None
    report = evaluate(pred_sets, gold_docs, taxonomy, macro_average)
    click.echo(report.table(name))
    if out is not None:
        _write_json(out, report.to_json())
        write_manifest(ctx, out, started)


@cli.command()
@click.option("--preds", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--taxonomy", "taxonomy_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--name", default="predictions")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_context
def audit(ctx, preds, taxonomy_file, name, out):
    """Count samples predicting labels outside the taxonomy."""
    started = _timestamp()
    report = audit_predictions(preds, load_taxonomy(taxonomy_file))
    click.echo(report.table(name))
    if out is not None:
        _write_json(out, report.to_json())
        write_manifest(ctx, out, started)


@cli.command()
@click.option("--docs", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--doc-vectors", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--taxonomy", "taxonomy_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--label-vectors", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--sizes", default="100,500,1000,2000,5000,full", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--strategy", type=click.Choice(["label_similarity", "neighbor_vote"]), default="neighbor_vote", show_default=True)
@click.option("--vote-neighbors", type=int, default=10, show_default=True)
@click.option("--k-grid", default="1-20", show_default=True)
@click.option("--objective", type=click.Choice(["micro", "macro"]), default="micro", show_default=True)
@click.option("--train-fraction", type=float, default=0.8, show_default=True)
@click.option("--val-fraction", type=float, default=0.1, show_default=True)
@with_service
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_context
def scaling(ctx, docs, doc_vectors, taxonomy_file, label_vectors, sizes, seed, strategy, vote_neighbors, k_grid, objective, train_fraction, val_fraction, service, model, cache_dir, retries, out):
    """F1 versus training-set size on seeded nested subsamples."""
    started = _timestamp()
    taxonomy = load_taxonomy(taxonomy_file)
    records = _attach(load_documents(docs, taxonomy), doc_vectors, service, model, cache_dir, retries)
    split = SplitSpec(seed, train_fraction, val_fraction)
    index = None
    if strategy == "label_similarity":
        if label_vectors is not None:
            vecs = VectorFileSource(label_vectors).lookup(taxonomy.ids)
        elif service:
            vecs = _embedder(service, model, cache_dir, retries).embed_texts([e.description for e in taxonomy])
        else:
            raise click.UsageError("label_similarity needs --label-vectors or --service")
        taxonomy = Taxonomy((e.with_embedding(v) for e, v in zip(taxonomy, vecs)), taxonomy.version)
        index = build_index(taxonomy)
    n_train = int(round(len(records) * train_fraction))
    sizes_ = [s for s in _parse_sizes(sizes) if s is None or s <= n_train]
    skipped = [s for s in _parse_sizes(sizes) if s is not None and s > n_train]
    for s in skipped:
        logger.warning("skipping size %d: training split has only %d documents", s, n_train)
    rows = run_scaling(records, taxonomy, sizes_, split, strategy, index=index, vote_neighbors=vote_neighbors, k_grid=_parse_grid(k_grid), objective=objective)
    click.echo(scaling_table(rows))
    if out is not None:
        _write_json(out, {"seed": seed, "rows": [r.to_json() for r in rows]})
        write_manifest(ctx, out, started, seed)


@cli.command()
@click.option("--docs", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--taxonomy", "taxonomy_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--name", default="corpus")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_context
def stats(ctx, docs, taxonomy_file, name, out):
    """Document count, label cardinality and mean labels per document."""
    started = _timestamp()
    taxonomy = load_taxonomy(taxonomy_file)
    s = corpus_stats(load_documents(docs, taxonomy), taxonomy)
    click.echo(s.table(name))
    if out is not None:
        _write_json(out, s.to_json())
        write_manifest(ctx, out, started)


@cli.command()
@click.option("--ft-preset", type=click.Choice(sorted(PRESETS)), default="table2-lora", show_default=True)
@click.option("--ret-preset", type=click.Choice(sorted(PRESETS)), default="table2-retrieval", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_context
def cost(ctx, ft_preset, ret_preset, out):
    """Analytical FLOPs of fine-tuning vs retrieval from named presets."""
    started = _timestamp()
    report = cost_report(PRESETS[ft_preset], PRESETS[ret_preset])
    click.echo(comparison_table())
    click.echo(f"{ft_preset} / {ret_preset}: {report.c_ft:.3e} / {report.c_ret:.3e} = {report.ratio:.2f}x")
    for note in report.notes:
        click.echo(f"  note: {note}")
    if out is not None:
        _write_json(out, report.to_json())
        write_manifest(ctx, out, started)


@cli.command()
@click.option("--index", "index_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--k", type=int, default=5, show_default=True, help="Default k (use the tuned k*).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@with_service
def serve(index_dir, k, host, port, service, model, cache_dir, retries):
    """Run the HTTP annotation service."""
    from .service import ServiceState, make_server

    index, taxonomy = load_index(index_dir)
    embedder = _embedder(service, model, cache_dir, retries) if service else None
    server = make_server(ServiceState(index, taxonomy, k, embedder), host, port)
    logging.getLogger("retrieval_annotator.service").setLevel(logging.INFO)
    click.echo(f"serving {len(index)} labels on http://{host}:{server.server_port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


@cli.command()
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--n-docs", type=int, default=5000, show_default=True)
@click.option("--n-labels", type=int, default=20, show_default=True)
@click.option("--dim", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def synth(ctx, out, n_docs, n_labels, dim, seed):
    """Write a synthetic clustered corpus (taxonomy, docs, vector files)."""
    from .synthetic import make_clustered_corpus

    started = _timestamp()
    taxonomy, docs = make_clustered_corpus(n_docs, n_labels, dim, seed=seed)
    out.mkdir(parents=True, exist_ok=True)
    write_taxonomy(out / "taxonomy.jsonl", taxonomy)
    write_vector_file(out / "label_vectors.txve", [(e.id, e.embedding) for e in taxonomy])
    write_documents(out / "docs.jsonl", docs)
    write_vector_file(out / "doc_vectors.txve", [(d.id, d.embedding) for d in docs])
    write_manifest(ctx, out, started, seed)
    click.echo(f"wrote {len(docs)} documents and {len(taxonomy)} labels to {out}")


def main(argv: Sequence[str] | None = None) -> None:
    cli.main(args=argv, prog_name="rannot")


if __name__ == "__main__":  # pragma: no cover
    main(sys.argv[1:])
