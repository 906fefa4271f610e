"""Command line entry point wiring the pipeline stages into one binary.

Every subcommand prints a deterministic key=value summary to stdout;
human-readable tables sit behind --pretty. Exit codes: 0 success, 2 usage
error, 3 validation error, 4 transport error.
"""
from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import corpus, filtering, grounding, metrics, rewards, traceparse
from . import judge as judge_mod
from . import report as report_mod
from .campaign import CampaignError, CampaignService, build_app

EXIT_VALIDATION = 3
EXIT_TRANSPORT = 4

_IN = click.Path(exists=True, dir_okay=False, path_type=Path)
_OUT = click.Path(dir_okay=False, path_type=Path)


def _fail(exc: Exception, code: int):
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(code)


def handle_errors(fn):
    """Map domain errors to exit 3 and transport errors to exit 4."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (judge_mod.TransportError, judge_mod.PartialBatch) as exc:
            _fail(exc, EXIT_TRANSPORT)
        except (
            corpus.CorpusError,
            traceparse.TraceParseError,
            metrics.MetricsError,
            rewards.RewardError,
            grounding.GroundingError,
            judge_mod.JudgeParseError,
            CampaignError,
            json.JSONDecodeError,
            OSError,
            ValueError,
        ) as exc:
            _fail(exc, EXIT_VALIDATION)

    return wrapper


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _kv(key: str, value) -> None:
    click.echo(f"{key}={_fmt(value)}")


def _parse_mode(name: str) -> traceparse.ParseMode:
    return traceparse.ParseMode.STRICT if name == "strict" else traceparse.ParseMode.LENIENT


def _read_records(path: Path) -> list[dict]:
    return [record for _, record in corpus._iter_records(path)]


def _answer_of(raw: str, mode: traceparse.ParseMode, fmt: str) -> corpus.Label:
    if fmt == "hard":
        return traceparse.parse_hard_label(raw, mode)
    return traceparse.parse_trace(raw, mode).answer


def _detection_pairs(
    pred_path: Path, truth_path: Path, mode_name: str, fmt: str
) -> tuple[list[tuple[corpus.Label, corpus.Label]], list[tuple[str, Exception]]]:
    """Parse predictions and join with ground truth; failures are collected."""
    truth = corpus.as_corpus(corpus.ingest_samples(truth_path))
    mode = _parse_mode(mode_name)
    pairs: list[tuple[corpus.Label, corpus.Label]] = []
    failures: list[tuple[str, Exception]] = []
    seen: set[str] = set()
    for sample_id, raw in traceparse.ingest_predictions(pred_path):
        if sample_id in seen:
            raise corpus.DuplicateId(sample_id)
        seen.add(sample_id)
        label = truth.label_of(sample_id)
        try:
            pairs.append((_answer_of(raw, mode, fmt), label))
        except traceparse.TraceParseError as exc:
            failures.append((sample_id, exc))
    for sample_id, exc in failures:
        click.echo(f"unparsed sample_id={sample_id} error={type(exc).__name__}", err=True)
    return pairs, failures


_mode_option = click.option(
    "--mode",
    type=click.Choice(["strict", "lenient"]),
    default="lenient",
    show_default=True,
    help="Trace grammar: strict enforces the training format.",
)
_format_option = click.option(
    "--format",
    "fmt",
    type=click.Choice(["trace", "hard"]),
    default="trace",
    show_default=True,
    help="Prediction style: structured trace or hard-label 'Final Answer: ...'.",
)


@click.group()
@click.version_option(package_name="sddkit")
def cli() -> None:
    """Tooling for speech deepfake detection corpora, traces, and rewards."""


# -- ingest ----------------------------------------------------------------


@cli.command()
@click.option("--samples", "samples_path", type=_IN, required=True)
@click.option("--annotations", "annotations_path", type=_IN, default=None)
@handle_errors
def ingest(samples_path: Path, annotations_path: Path | None) -> None:
    """Validate corpus files and report their composition."""
    samples = corpus.ingest_samples(samples_path)
    _kv("n_samples", len(samples))
    for label in corpus.Label:
        _kv(f"n_{label.value}", sum(1 for s in samples if s.label is label))
    if annotations_path is not None:
        annotations = corpus.ingest_annotations(annotations_path, samples)
        _kv("n_annotations", len(annotations))
        _kv("n_annotators", len({a.annotator_id for a in annotations}))


# -- filter ----------------------------------------------------------------


@cli.command("filter")
@click.option("--annotations", "annotations_path", type=_IN, required=True)
@click.option("--samples", "samples_path", type=_IN, required=True)
@click.option("--min-acc", type=float, default=0.75, show_default=True)
@click.option("--high-acc", type=float, default=0.85, show_default=True)
@click.option("--out", "out_path", type=_OUT, required=True)
@click.option("--report-out", type=_OUT, default=None, help="Annotator report JSONL.")
@click.option("--review-out", type=_OUT, default=None, help="Review manifest JSONL.")
@click.option("--pretty", is_flag=True)
@handle_errors
def filter_cmd(
    annotations_path: Path,
    samples_path: Path,
    min_acc: float,
    high_acc: float,
    out_path: Path,
    report_out: Path | None,
    review_out: Path | None,
    pretty: bool,
) -> None:
    """Drop low-accuracy annotators and wrong-label annotations."""
    samples = corpus.ingest_samples(samples_path)
    annotations = corpus.ingest_annotations(annotations_path, samples)
    cfg = filtering.FilterConfig(min_accuracy=min_acc, high_tier_accuracy=high_acc)
    result = filtering.filter_corpus(annotations, samples, cfg)

    corpus.write_jsonl((corpus.annotation_to_record(a) for a in result.retained), out_path)
    if report_out is not None:
        corpus.write_jsonl((r.to_record() for r in result.report.values()), report_out)
    if review_out is not None:
        corpus.write_jsonl(
            (
                {"annotator_id": annotator_id, "sample_id": a.sample_id}
                for annotator_id, chosen in result.review_manifest.items()
                for a in chosen
            ),
            review_out,
        )

    _kv("n_annotations", len(annotations))
    _kv("retained", len(result.retained))
    _kv("annotators", len(result.report))
    for tier in filtering.Tier:
        _kv(
            f"annotators_{tier.value}",
            sum(1 for r in result.report.values() if r.tier is tier),
        )
    if pretty:
        for record in result.report.values():
            click.echo(
                f"{record.annotator_id:<16} {record.n_correct:>4}/{record.n_annotations:<4} "
                f"acc={record.accuracy:.3f} tier={record.tier.value}"
            )


# -- split -----------------------------------------------------------------


@cli.command()
@click.option("--samples", "samples_path", type=_IN, required=True)
@click.option("--ratios", default="8,1,1", show_default=True, help="train,val,test weights.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--stratify-by", default="label,source", show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@handle_errors
def split(samples_path: Path, ratios: str, seed: int, stratify_by: str, out_dir: Path) -> None:
    """Stratified train/val/test split written as three JSONL files."""
    try:
        weights = tuple(float(part) for part in ratios.split(","))
    except ValueError:
        raise click.BadParameter("expected three comma-separated numbers", param_hint="--ratios")
    if len(weights) != 3:
        raise click.BadParameter("expected three comma-separated numbers", param_hint="--ratios")
    fields = tuple(part.strip() for part in stratify_by.split(",") if part.strip())

    samples = corpus.ingest_samples(samples_path)
    spec = corpus.SplitSpec(ratios=weights, seed=seed, stratify_by=fields)
    assignment = corpus.make_splits(samples, spec)

    out_dir.mkdir(parents=True, exist_ok=True)
    by_split = {split_: [] for split_ in corpus.Split}
    for sample in samples:
        by_split[assignment[sample.id]].append(sample)
    for split_, members in by_split.items():
        corpus.write_jsonl(
            (corpus.sample_to_record(s) for s in members), out_dir / f"{split_.value}.jsonl"
        )
        _kv(split_.value, len(members))


# -- parse -----------------------------------------------------------------


@cli.command()
@click.option("--in", "in_path", type=_IN, required=True)
@click.option(
    "--mode", type=click.Choice(["strict", "lenient"]), default="strict", show_default=True
)
@_format_option
@click.option("--out", "out_path", type=_OUT, default=None)
@handle_errors
def parse(in_path: Path, mode: str, fmt: str, out_path: Path | None) -> None:
    """Parse model outputs into answers and reason tags."""
    parse_mode = _parse_mode(mode)
    parsed: list[dict] = []
    n_failed = 0
    for sample_id, raw in traceparse.ingest_predictions(in_path):
        try:
            if fmt == "hard":
                answer = traceparse.parse_hard_label(raw, parse_mode)
                parsed.append({"sample_id": sample_id, "answer": answer.token})
            else:
                trace = traceparse.parse_trace(raw, parse_mode)
                parsed.append(
                    {
                        "sample_id": sample_id,
                        "answer": trace.answer.token,
                        "reasons": sorted(trace.reasons),
                    }
                )
        except traceparse.TraceParseError as exc:
            n_failed += 1
            click.echo(f"unparsed sample_id={sample_id} error={type(exc).__name__}", err=True)
    if out_path is not None:
        corpus.write_jsonl(parsed, out_path)
    _kv("n", len(parsed) + n_failed)
    _kv("parsed", len(parsed))
    _kv("failed", n_failed)


# -- score -----------------------------------------------------------------


@cli.command()
@click.option("--pred", "pred_path", type=_IN, required=True)
@click.option("--truth", "truth_path", type=_IN, required=True)
@_mode_option
@_format_option
@handle_errors
def score(pred_path: Path, truth_path: Path, mode: str, fmt: str) -> None:
    """Detection metrics for a predictions file against ground truth."""
    pairs, failures = _detection_pairs(pred_path, truth_path, mode, fmt)
    report = metrics.detection_metrics(pairs)
    _kv("n", len(pairs))
    _kv("n_failed", len(failures))
    _kv("accuracy", report.accuracy)
    for name in ("balanced_accuracy", "f1", "recall_bonafide", "recall_spoof"):
        value = getattr(report, name)
        if value is not None:
            _kv(name, value)
    if report.undefined:
        _kv("undefined", ",".join(report.undefined))


# -- jaccard ---------------------------------------------------------------


def _tag_sets(path: Path) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for line_no, record in corpus._iter_records(path):
        sample_id = record.get("sample_id")
        if sample_id is None:
            raise corpus.MissingField("sample_id", line_no)
        sample_id = str(sample_id)
        if sample_id in out:
            raise corpus.DuplicateId(sample_id)
        out[sample_id] = [int(tag) for tag in (record.get("reasons") or [])]
    return out


@cli.command()
@click.option("--ref", "ref_path", type=_IN, required=True)
@click.option("--pred", "pred_path", type=_IN, required=True)
@handle_errors
def jaccard(ref_path: Path, pred_path: Path) -> None:
    """Per-sample and mean Jaccard index over reason-tag files."""
    refs = _tag_sets(ref_path)
    preds = _tag_sets(pred_path)
    missing = sorted(set(refs) ^ set(preds))
    if missing:
        raise corpus.UnknownSample(missing[0])
    values = []
    for sample_id in refs:
        value = metrics.jaccard(refs[sample_id], preds[sample_id])
        values.append(value)
        click.echo(f"sample_id={sample_id} jaccard={_fmt(value)}")
    _kv("n", len(values))
    _kv("mean_jaccard", sum(values) / len(values) if values else 1.0)


# -- histogram -------------------------------------------------------------


@cli.command()
@click.option("--in", "in_path", type=_IN, required=True)
@click.option("--fig", "fig_path", type=_OUT, default=None)
@handle_errors
def histogram(in_path: Path, fig_path: Path | None) -> None:
    """Reason-tag frequency over a tag file; optional bar-chart figure."""
    records = _read_records(in_path)
    hist = metrics.tag_histogram([record.get("reasons") or [] for record in records])
    for tag in sorted(hist):
        _kv(f"tag_{tag}", hist[tag])
    if fig_path is not None:
        report_mod.write_tag_histogram_figure(hist, fig_path)
        _kv("fig", fig_path)


# -- reward ----------------------------------------------------------------


def _grouped_predictions(records: list[dict]) -> list[tuple[str, str]]:
    """Order generations per sample, honoring explicit gen_index when given."""
    by_sample: dict[str, list[dict]] = {}
    order: list[str] = []
    for record in records:
        sample_id = record.get("sample_id")
        if sample_id is None or "raw_output" not in record:
            raise corpus.MissingField("sample_id/raw_output", 0)
        sample_id = str(sample_id)
        if sample_id not in by_sample:
            order.append(sample_id)
        by_sample.setdefault(sample_id, []).append(record)
    out: list[tuple[str, str]] = []
    for sample_id in order:
        group = by_sample[sample_id]
        if all("gen_index" in record for record in group):
            group = sorted(group, key=lambda record: int(record["gen_index"]))
        out.extend((sample_id, str(record["raw_output"])) for record in group)
    return out


def _judge_scores_file(path: Path) -> dict[tuple[str, int], rewards.JudgeScore]:
    scores: dict[tuple[str, int], rewards.JudgeScore] = {}
    for line_no, record in corpus._iter_records(path):
        try:
            key = (str(record["sample_id"]), int(record["gen_index"]))
            scores[key] = rewards.JudgeScore(
                coverage=int(record["coverage"]),
                relevance=int(record["relevance"]),
                logic=int(record["logic"]),
                helpfulness=int(record["helpfulness"]),
            )
        except KeyError as exc:
            raise corpus.MissingField(str(exc), line_no) from None
    return scores


@cli.command()
@click.option("--pred", "pred_path", type=_IN, required=True)
@click.option("--truth", "truth_path", type=_IN, required=True)
@click.option("--judge-scores", "judge_path", type=_IN, default=None)
@click.option("--group-size", type=int, default=6, show_default=True)
@click.option("--w-correct", type=float, default=1.0, show_default=True)
@click.option("--w-format", type=float, default=0.2, show_default=True)
@click.option("--w-pref", type=float, default=0.5, show_default=True)
@click.option("--epsilon", type=float, default=1e-8, show_default=True)
@click.option("--out", "out_path", type=_OUT, required=True)
@handle_errors
def reward(
    pred_path: Path,
    truth_path: Path,
    judge_path: Path | None,
    group_size: int,
    w_correct: float,
    w_format: float,
    w_pref: float,
    epsilon: float,
    out_path: Path,
) -> None:
    """Composite rewards and group-relative advantages per generation."""
    cfg = rewards.RewardConfig(
        w_correct=w_correct,
        w_format=w_format,
        w_pref=w_pref,
        group_size=group_size,
        epsilon=epsilon,
    )
    predictions = _grouped_predictions(_read_records(pred_path))
    truths = corpus.ingest_samples(truth_path)
    judge_scores = _judge_scores_file(judge_path) if judge_path else None
    groups = rewards.build_groups(predictions, truths, judge_scores, cfg)
    records = list(rewards.groups_to_records(groups))
    corpus.write_jsonl(records, out_path)
    _kv("groups", len(groups))
    _kv("generations", len(records))
    composites = [record["composite"] for record in records]
    _kv("mean_composite", sum(composites) / len(composites) if composites else 0.0)


# -- perturb ---------------------------------------------------------------


@cli.command()
@click.option("--in", "in_path", type=_IN, required=True)
@click.option("--kind", type=click.Choice(["noise", "mask", "gain"]), required=True)
@click.option("--snr-db", type=float, default=None, help="Noise target SNR (dB).")
@click.option("--start-s", type=float, default=None, help="Mask start (seconds).")
@click.option("--len-s", type=float, default=None, help="Mask length (seconds).")
@click.option("--delta-db", type=float, default=None, help="Gain change (dB).")
@click.option("--sample-id", required=True)
@click.option("--salt", required=True)
@click.option("--out", "out_path", type=_OUT, required=True)
@click.option("--manifest", "manifest_path", type=_OUT, default=None, help="Append spec record.")
@handle_errors
def perturb(
    in_path: Path,
    kind: str,
    snr_db: float | None,
    start_s: float | None,
    len_s: float | None,
    delta_db: float | None,
    sample_id: str,
    salt: str,
    out_path: Path,
    manifest_path: Path | None,
) -> None:
    """Apply one deterministic perturbation to a WAV file."""
    if kind == "noise":
        if snr_db is None:
            raise click.UsageError("--snr-db is required for --kind noise")
        transform = grounding.GaussianNoise(target_snr_db=snr_db)
    elif kind == "mask":
        if start_s is None or len_s is None:
            raise click.UsageError("--start-s and --len-s are required for --kind mask")
        transform = grounding.TimeMask(start_s=start_s, len_s=len_s)
    else:
        if delta_db is None:
            raise click.UsageError("--delta-db is required for --kind gain")
        transform = grounding.Gain(delta_db=delta_db)

    spec = grounding.PerturbationSpec(transform=transform, sample_id=sample_id, salt=salt)
    audio = grounding.read_wav(in_path)
    perturbed = grounding.apply_perturbation(audio, spec)
    grounding.write_wav(perturbed, out_path)
    if manifest_path is not None:
        with open(manifest_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(spec.to_record(), ensure_ascii=False) + "\n")
    _kv("kind", kind)
    _kv("resolved_seed", spec.resolved_seed)
    _kv("n_samples", len(perturbed.samples))
    _kv("sample_rate_hz", perturbed.sample_rate_hz)
    if kind == "noise":
        _kv("measured_snr_db", round(grounding.measure_snr_db(audio, perturbed), 3))
    _kv("out", out_path)


# -- judge -----------------------------------------------------------------


@cli.command("judge")
@click.option("--pred", "pred_path", type=_IN, required=True)
@click.option("--truth", "truth_path", type=_IN, required=True)
@click.option(
    "--mode", type=click.Choice(["strict", "lenient"]), default="strict", show_default=True
)
@click.option("--runs", type=int, default=5, show_default=True)
@click.option("--retries", type=int, default=3, show_default=True)
@click.option("--timeout", type=float, default=60.0, show_default=True)
@click.option("--max-in-flight", type=int, default=4, show_default=True)
@click.option("--endpoint", default="", help="Chat-completions base URL (or env).")
@click.option("--model", default="", help="Judge model name.")
@click.option("--mock", is_flag=True, help="Use the deterministic offline judge.")
@click.option("--transcript", "transcript_path", type=_OUT, default=None)
@click.option("--out", "out_path", type=_OUT, default=None)
@handle_errors
def judge_cmd(
    pred_path: Path,
    truth_path: Path,
    mode: str,
    runs: int,
    retries: int,
    timeout: float,
    max_in_flight: int,
    endpoint: str,
    model: str,
    mock: bool,
    transcript_path: Path | None,
    out_path: Path | None,
) -> None:
    """Score reasoning traces with the LLM judge (or its offline mock)."""
    truth = corpus.as_corpus(corpus.ingest_samples(truth_path))
    parse_mode = _parse_mode(mode)
    requests = []
    n_unparsed = 0
    for sample_id, raw in traceparse.ingest_predictions(pred_path):
        try:
            trace = traceparse.parse_trace(raw, parse_mode)
        except traceparse.TraceParseError as exc:
            n_unparsed += 1
            click.echo(f"unparsed sample_id={sample_id} error={type(exc).__name__}", err=True)
            continue
        requests.append(
            judge_mod.JudgeRequest(sample_id=sample_id, trace=trace, truth=truth.label_of(sample_id))
        )

    cfg = judge_mod.JudgeConfig(
        endpoint_url=endpoint,
        model_name=model,
        n_runs=runs,
        max_retries=retries,
        timeout_s=timeout,
        max_in_flight=max_in_flight,
        transcript_path=transcript_path,
    )
    transport = judge_mod.MockJudgeTransport() if mock else None
    result = judge_mod.judge_many(requests, cfg, transport)

    if out_path is not None:
        records = []
        for request in requests:
            run_scores = result.scores.get(request.sample_id)
            if run_scores is None:
                continue
            for run_index, score_ in enumerate(run_scores):
                record = {"sample_id": request.sample_id, "run_index": run_index}
                record.update(score_.as_dict())
                record["mean"] = score_.mean
                records.append(record)
        corpus.write_jsonl(records, out_path)

    _kv("judged", len(result.scores))
    _kv("failed", len(result.failed))
    _kv("unparsed", n_unparsed)
    if result.aggregate is not None:
        _kv("mean", result.aggregate.mean)
        _kv("std", result.aggregate.std)
    if result.failed:
        for sample_id in result.failed:
            click.echo(f"failed sample_id={sample_id}", err=True)
        sys.exit(EXIT_TRANSPORT)


# -- serve -----------------------------------------------------------------


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--log", "log_path", type=_OUT, default=None, help="Event log (JSONL).")
@click.option("--samples", "samples_path", type=_IN, default=None, help="Pre-create a campaign.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--window", type=int, default=30, show_default=True)
@click.option("--min-acc", type=float, default=0.75, show_default=True)
@click.option("--fee", type=float, default=0.0, show_default=True)
@click.option("--question", default=None)
@handle_errors
def serve(
    host: str,
    port: int,
    log_path: Path | None,
    samples_path: Path | None,
    seed: int,
    window: int,
    min_acc: float,
    fee: float,
    question: str | None,
) -> None:
    """Run the annotation campaign HTTP service."""
    import uvicorn

    service = CampaignService(log_path=log_path)
    if samples_path is not None:
        config = dict(
            shuffle_seed=seed, feedback_window=window, min_accuracy=min_acc, per_sample_fee=fee
        )
        if question is not None:
            config["question_text"] = question
        campaign = service.create_campaign(corpus.ingest_samples(samples_path), **config)
        _kv("campaign_id", campaign.id)
    uvicorn.run(build_app(service), host=host, port=port, log_level="warning")


# -- report ----------------------------------------------------------------


@cli.command()
@click.option("--pred", "pred_path", type=_IN, required=True)
@click.option("--truth", "truth_path", type=_IN, required=True)
@_mode_option
@_format_option
@click.option("--model", default="model", show_default=True)
@click.option("--train-set", default="-", show_default=True)
@click.option("--pretty", is_flag=True, help="Render the five-column table.")
@click.option("--fig", "fig_path", type=_OUT, default=None, help="Metrics bar chart.")
@click.option("--tag-fig", "tag_fig_path", type=_OUT, default=None, help="Reason-tag histogram.")
@handle_errors
def report(
    pred_path: Path,
    truth_path: Path,
    mode: str,
    fmt: str,
    model: str,
    train_set: str,
    pretty: bool,
    fig_path: Path | None,
    tag_fig_path: Path | None,
) -> None:
    """Evaluation table row (one-decimal percentages) with optional figures."""
    if tag_fig_path is not None and fmt == "hard":
        raise click.UsageError("--tag-fig requires --format trace")
    pairs, failures = _detection_pairs(pred_path, truth_path, mode, fmt)
    detection = metrics.detection_metrics(pairs)
    row = report_mod.ReportRow(model=model, train_set=train_set, report=detection)

    _kv("model", model)
    _kv("train_set", train_set)
    _kv("n", len(pairs))
    _kv("n_failed", len(failures))
    _kv("accuracy", report_mod.percent(detection.accuracy))
    _kv("balanced_accuracy", report_mod.percent(detection.balanced_accuracy))
    _kv("f1", report_mod.percent(detection.f1))
    if pretty:
        click.echo(report_mod.render_table([row]))
    if fig_path is not None:
        report_mod.write_metrics_figure([row], fig_path)
        _kv("fig", fig_path)
    if tag_fig_path is not None:
        parse_mode = _parse_mode(mode)
        tag_lists = []
        for _, raw in traceparse.ingest_predictions(pred_path):
            try:
                tag_lists.append(sorted(traceparse.parse_trace(raw, parse_mode).reasons))
            except traceparse.TraceParseError:
                continue
        report_mod.write_tag_histogram_figure(metrics.tag_histogram(tag_lists), tag_fig_path)
        _kv("tag_fig", tag_fig_path)


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
