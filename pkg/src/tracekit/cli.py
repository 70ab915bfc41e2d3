"""Single entry point wiring the pipeline stages into subcommands.

Config file format: flat KEY=value lines ('#' comments allowed). Flags win
over config values. Gateway resolution order per profile: an explicit
--mock-transcript forces the scripted mock, a configured base URL selects the
HTTP client, and with neither the deterministic procedural mock is used (desk
mode). Every run writes run_manifest.json (command, seed, config fingerprint,
version) next to its primary output.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import __version__
from .annotation import AnnotationStore, Exemplar, tally_2afc
from .corpus import Corpus, CorpusError, check_contamination, load_manifest
from .gateway import GatewayError, GatewayProfile, HttpGateway, ScriptedGateway
from .instructions import (
    DEFAULT_QUOTAS,
    dataset_stats,
    decontaminate,
    forge_dataset,
    write_instructions,
)
from .metrics import (
    MetricError,
    ScoredItem,
    accuracy,
    auc,
    average_precision,
    bleu,
    default_grid,
    embed_similarity,
    judge_batch,
    aggregate_overall,
    config_fingerprint,
    render_report,
    rouge_l,
    similarity_mapping,
    threshold_curve,
)
from .reasoning import build_fakechain, load_fakechain
from .softscore import EstimateRefused, classify, estimate, qualitative_verdict


class CliError(click.ClickException):
    exit_code = 1


def parse_config(path: str | None) -> dict:
    if not path:
        return {}
    config = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"config line not KEY=value: {raw!r}")
        key, value = line.split("=", 1)
        config[key.strip()] = value.strip()
    return config


def make_gateway(ctx_obj: dict, profile_name: str | None = None):
    """Transcript mock > configured HTTP endpoint > procedural mock."""
    config = ctx_obj.get("config", {})
    seed = ctx_obj.get("seed", 0)
    if ctx_obj.get("mock_transcript"):
        return ScriptedGateway.from_transcript_file(
            ctx_obj["mock_transcript"], seed=seed,
            model_tag=f"mock-{profile_name or 'default'}")
    # config keys like gateway.base_url map onto the env names; config wins
    overrides = {k.upper().replace(".", "_"): v for k, v in config.items()}
    profile = GatewayProfile.from_env(profile_name, env={**dict_environ(), **overrides})
    if profile.base_url:
        return HttpGateway(profile)
    return ScriptedGateway(seed=seed, model_tag=f"mock-{profile_name or 'default'}")


def dict_environ() -> dict:
    import os
    return dict(os.environ)


def write_run_manifest(out_dir: Path, command: str, ctx_obj: dict, extra: dict | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "seed": ctx_obj.get("seed"),
        "config_fingerprint": config_fingerprint(ctx_obj.get("config", {})),
        "version": __version__,
    }
    manifest.update(extra or {})
    (out_dir / f"run_manifest.{command}.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


@click.group()
@click.option("--seed", type=int, default=None, help="Run seed (flags win over config).")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Flat KEY=value config file.")
@click.option("--mock-transcript", type=click.Path(exists=True), default=None,
              help="Scripted mock transcript (forces the mock gateway).")
@click.version_option(__version__)
@click.pass_context
def main(ctx, seed, config_path, mock_transcript):
    """Forensic-knowledge pipeline: corpus, annotation, reasoning,
    instructions, detection, evaluation."""
    config = parse_config(config_path)
    ctx.obj = {
        "config": config,
        "seed": seed if seed is not None else int(config.get("seed", 0)),
        "mock_transcript": mock_transcript,
    }


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_dir", required=True, type=click.Path())
@click.pass_obj
def ingest(obj, manifest_path, corpus_dir):
    """Ingest a CSV/JSONL manifest into a corpus directory."""
    try:
        corpus = Corpus(corpus_dir)
        summary = corpus.ingest(load_manifest(manifest_path))
    except CorpusError as exc:
        raise CliError(str(exc))
    write_run_manifest(Path(corpus_dir), "ingest", obj,
                       {"manifest": Path(manifest_path).name})
    click.echo(json.dumps({"n_fake": summary.n_fake, "n_real": summary.n_real,
                           "n_deduped": summary.n_deduped, "n_errors": len(summary.errors)}))
    if summary.errors:
        for err in summary.errors:
            click.echo(f"error: {err['path']}: {err['error']}", err=True)


@main.command()
@click.option("--a", "dir_a", required=True, type=click.Path(exists=True))
@click.option("--b", "dir_b", required=True, type=click.Path(exists=True))
def contamination(dir_a, dir_b):
    """Content hashes shared by two corpora."""
    try:
        report = check_contamination(Corpus.open(dir_a), Corpus.open(dir_b))
    except CorpusError as exc:
        raise CliError(str(exc))
    click.echo(json.dumps({"count": report.count,
                           "overlapping_hashes": list(report.overlapping_hashes)}))


@main.group()
def annotate():
    """Expert-feedback service."""


@annotate.command()
@click.option("--port", type=int, default=8000)
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--state", "state_dir", type=click.Path(), default=None,
              help="Annotation state dir (default: <corpus>/annotations).")
@click.option("--ui", "ui_dir", type=click.Path(), default=None,
              help="Static SPA build to serve at /.")
@click.pass_obj
def serve(obj, port, corpus_dir, state_dir, ui_dir):
    """Serve the annotation REST API (and the workbench UI when built)."""
    import uvicorn

    from .service import create_app
    corpus = Corpus.open(corpus_dir)
    store = AnnotationStore(corpus, state_dir or Path(corpus_dir) / "annotations")
    write_run_manifest(Path(state_dir or Path(corpus_dir) / "annotations"), "annotate-serve", obj)
    uvicorn.run(create_app(store, static_dir=ui_dir), host="127.0.0.1", port=port)


@main.group()
def acoti():
    """Guided reasoning generation."""


@acoti.command("run")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--annotations", "annotations_dir", required=True, type=click.Path(exists=True))
@click.option("--exemplars", "exemplars_dir", type=click.Path(exists=True), default=None,
              help="Separate exemplar state dir (default: the annotations dir).")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--concurrency", type=int, default=1)
@click.option("--max-attempts", type=int, default=3)
@click.pass_obj
def acoti_run(obj, corpus_dir, annotations_dir, exemplars_dir, out_path, concurrency, max_attempts):
    """Generate one validated reasoning record per accepted merged annotation."""
    corpus = Corpus.open(corpus_dir)
    store = AnnotationStore(corpus, annotations_dir)
    if exemplars_dir and Path(exemplars_dir) != Path(annotations_dir):
        _load_exemplars(store, Path(exemplars_dir) / "exemplars.jsonl")
    gateway = make_gateway(obj)
    manifest = build_fakechain(corpus, store, gateway, out_path,
                               max_attempts=max_attempts, concurrency=concurrency)
    # keep the run manifest path-free so identical runs give identical trees
    recorded = {**manifest, "out": Path(manifest["out"]).name,
                "rejects": Path(manifest["rejects"]).name if manifest["rejects"] else None}
    write_run_manifest(Path(out_path).parent, "acoti-run", obj, recorded)
    click.echo(json.dumps(manifest))


def _load_exemplars(store: AnnotationStore, path: Path) -> None:
    if not path.exists():
        raise CliError(f"no exemplars.jsonl in {path.parent}")
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                row = json.loads(line)
                store.registry.register(Exemplar(
                    exemplar_id=row["exemplar_id"], image_id=row["image_id"],
                    polarity=row["polarity"], reasoning_text=row["reasoning_text"],
                    covered=frozenset(row["covered"])))


@main.group()
def instruct():
    """Instruction dataset forging."""


@instruct.command("gen")
@click.option("--fakechain", "chain_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--quota", default="1,2,15,25", show_default=True,
              help="Per-record quotas p1,p2,p3,p4.")
@click.option("--decontaminate", "run_decon", is_flag=True, default=False)
@click.option("--k-trials", type=int, default=5)
@click.option("--margin", type=float, default=0.2)
@click.pass_obj
def instruct_gen(obj, chain_path, out_path, quota, run_decon, k_trials, margin):
    """Forge the four instruction parts from a reasoning dataset."""
    try:
        q = [int(x) for x in quota.split(",")]
        if len(q) != 4 or any(v < 0 for v in q):
            raise ValueError
    except ValueError:
        raise CliError(f"--quota must be four non-negative integers, got {quota!r}")
    quotas = dict(zip(("p1", "p2", "p3", "p4"), q))
    records = load_fakechain(chain_path)
    rewriters = (make_gateway(obj, "rewriter-A"), make_gateway(obj, "rewriter-B"))
    items, skips = forge_dataset(records, rewriters, quotas=quotas, seed=obj["seed"])
    dropped = []
    undecided = []
    if run_decon:
        probe = make_gateway(obj, "probe")
        result = decontaminate(items, probe, k_trials=k_trials, margin=margin)
        items, dropped, undecided = result.kept, result.dropped, result.undecided_ids
    out_path = Path(out_path)
    write_instructions(items, out_path)
    if dropped:
        write_instructions(dropped, out_path.with_suffix(out_path.suffix + ".dropped.jsonl"))
    if skips:
        with open(out_path.with_suffix(out_path.suffix + ".skips.jsonl"), "w", encoding="utf-8") as f:
            for skip in skips:
                f.write(json.dumps(skip, sort_keys=True) + "\n")
    stats = dataset_stats(items)
    write_run_manifest(out_path.parent, "instruct-gen", obj, {
        "quotas": quotas, "n_items": len(items), "n_skipped": len(skips),
        "n_dropped": len(dropped), "n_undecided": len(undecided)})
    click.echo(json.dumps({"n_items": len(items), "n_skipped": len(skips),
                           "n_dropped": len(dropped), "per_part": stats["per_part"]}))


@main.command()
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["soft", "qualitative"]), default="soft")
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_obj
def detect(obj, corpus_dir, mode, threshold, out_path):
    """Score every corpus image as fake/real through the configured endpoint."""
    corpus = Corpus.open(corpus_dir)
    gateway = make_gateway(obj)
    rows = []
    for record in corpus.records():
        if mode == "soft":
            try:
                p = estimate(record.path, gateway)
            except (EstimateRefused, GatewayError) as exc:
                rows.append({"image_id": record.id, "p_fake": None, "p_real": None,
                             "label": "error", "missing": [str(exc)]})
                continue
            rows.append({"image_id": record.id, "p_fake": p.p_fake, "p_real": p.p_real,
                         "label": classify(p, threshold), "missing": list(p.missing_tokens)})
        else:
            verdict = qualitative_verdict(record.path, gateway)
            rows.append({"image_id": record.id, "p_fake": None, "p_real": None,
                         "label": verdict.label, "missing": []})
    out_path = Path(out_path)
    with open(out_path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n")
    write_run_manifest(out_path.parent, "detect", obj,
                       {"mode": mode, "threshold": threshold, "n": len(rows)})
    click.echo(json.dumps({"n_scored": len(rows)}))


@main.group("eval")
def eval_group():
    """Evaluation protocols."""


def _load_jsonl(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


@eval_group.command("detection")
@click.option("--verdicts", "verdicts_path", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True),
              help="Corpus records.jsonl or JSONL of {image_id, auth}.")
@click.option("--grid", type=int, default=99, show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_obj
def eval_detection(obj, verdicts_path, labels_path, grid, threshold, out_path):
    """Accuracy, AP, AUC and the threshold-accuracy curve for scored verdicts."""
    labels = {}
    for row in _load_jsonl(labels_path):
        labels[row.get("image_id", row.get("id"))] = row["auth"]
    items = []
    for row in _load_jsonl(verdicts_path):
        if row.get("p_fake") is None:
            continue
        if row["image_id"] not in labels:
            raise CliError(f"no label for {row['image_id']}")
        items.append(ScoredItem(id=row["image_id"], score=row["p_fake"],
                                label=labels[row["image_id"]]))
    if not items:
        raise CliError("no scored verdicts to evaluate")
    try:
        preds = ["fake" if it.score >= threshold else "real" for it in items]
        metrics = {
            "n": len(items),
            "accuracy": accuracy(preds, [it.label for it in items]),
            "average_precision": average_precision(items),
            "auc": auc(items),
            "threshold": threshold,
            "curve": threshold_curve(items, default_grid(grid)),
        }
    except MetricError as exc:
        raise CliError(str(exc))
    report = render_report(metrics, seed=obj["seed"], config=obj["config"])
    if out_path:
        Path(out_path).write_text(report, encoding="utf-8")
        write_run_manifest(Path(out_path).parent, "eval-detection", obj)
    click.echo(report)


@eval_group.command("transparency")
@click.option("--responses", "responses_path", required=True, type=click.Path(exists=True))
@click.option("--refs", "refs_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_obj
def eval_transparency(obj, responses_path, refs_path, out_path):
    """Word-level, embedding and judge metrics plus the overall aggregate."""
    responses = {r["id"]: r["response"] for r in _load_jsonl(responses_path)}
    refs = {r["id"]: r["reference"] for r in _load_jsonl(refs_path)}
    ids = sorted(set(responses) & set(refs))
    if not ids:
        raise CliError("no overlapping ids between responses and references")
    cand = [responses[i] for i in ids]
    ref = [refs[i] for i in ids]
    embedder = make_gateway(obj, "embedder")
    judge_gw = make_gateway(obj, "judge")
    try:
        b1 = sum(bleu(c, r, 1) for c, r in zip(cand, ref)) / len(ids)
        b2 = sum(bleu(c, r, 2) for c, r in zip(cand, ref)) / len(ids)
        rl = sum(rouge_l(c, r) for c, r in zip(cand, ref)) / len(ids)
        sim = sum(embed_similarity(c, r, embedder) for c, r in zip(cand, ref)) / len(ids)
        judged = judge_batch(cand, ref, judge_gw)
        metrics = {
            "n": len(ids), "b1": b1, "b2": b2, "rouge_l": rl, "sim": sim,
            "alpha": judged["alpha_mean"], "rho": judged["rho_mean"],
            "kappa": judged["kappa_mean"], "judge_failures": judged["n_failed"],
            "judge_flagged": judged["flagged"],
            "similarity_mapping": similarity_mapping(embedder),
            "avr": aggregate_overall(b1=b1, b2=b2, rouge_l=rl, sim=sim,
                                     alpha=judged["alpha_mean"], rho=judged["rho_mean"],
                                     kappa=judged["kappa_mean"]),
        }
    except MetricError as exc:
        raise CliError(str(exc))
    report = render_report(metrics, seed=obj["seed"], config=obj["config"])
    if out_path:
        Path(out_path).write_text(report, encoding="utf-8")
        write_run_manifest(Path(out_path).parent, "eval-transparency", obj)
    click.echo(report)


@main.command("report")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["json", "markdown"]), default="markdown")
def report_cmd(in_path, fmt):
    """Re-render an emitted JSON report."""
    bundle = json.loads(Path(in_path).read_text(encoding="utf-8"))
    if "metrics" not in bundle:
        raise CliError("input is not a report bundle (missing 'metrics')")
    click.echo(render_report(bundle["metrics"], seed=bundle.get("seed"), fmt=fmt))


@main.command("2afc-tally")
@click.option("--votes", "votes_path", required=True, type=click.Path(exists=True))
@click.option("--preferred", type=click.Choice(["A", "B"]), default="A")
def tally_cmd(votes_path, preferred):
    """Tally a JSONL file of preference votes."""
    from .annotation import TwoAfcVote
    votes = [TwoAfcVote(rater_id=r["rater_id"], item_id=r["item_id"], choice=r["choice"])
             for r in _load_jsonl(votes_path)]
    try:
        result = tally_2afc(votes, preferred)
    except Exception as exc:
        raise CliError(str(exc))
    click.echo(json.dumps({"preferred": preferred, "percent": result.percent,
                           "n_votes": result.n_votes, "n_preferred": result.n_preferred}))


if __name__ == "__main__":
    main()
