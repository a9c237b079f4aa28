"""Command-line wrapper over every module, for batch and offline use.

Configuration precedence: CLI flags > environment variables > config file.
The config file is JSON with the same keys as the flags (taxonomy, backend,
mock_script, timeout_ms).
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from .domain import MemberProfile, Query
from .evaluation import compare, evaluate, load_labeled_examples
from .gateway import LiveBackend, LlmBackend, MockBackend, MockScript, default_mock_script
from .pipeline import Pipeline, PipelineConfig
from .planner import plan as plan_query
from .rewriter import detect_slots, rewrite
from .scheduling import (
    HETEROGENEOUS,
    HOMOGENEOUS,
    load_task_datasets,
    schedule,
    upsample as upsample_datasets,
)
from .streaming import StreamParser, event_to_dict
from .taxonomy import TaxonomyConfig, default_taxonomy
from .tools import default_registry

ENV_TAXONOMY = "QUERYLENS_TAXONOMY"
ENV_BACKEND = "QUERYLENS_BACKEND"
ENV_MOCK_SCRIPT = "QUERYLENS_MOCK_SCRIPT"
ENV_TIMEOUT_MS = "QUERYLENS_TIMEOUT_MS"


@dataclass
class AppContext:
    taxonomy_path: str | None
    backend_kind: str
    mock_script_path: str | None
    timeout_ms: int
    topology: str = "combined"

    def taxonomy(self) -> TaxonomyConfig:
        if self.taxonomy_path:
            return TaxonomyConfig.load(self.taxonomy_path)
        return default_taxonomy()

    def backend(self) -> LlmBackend:
        if self.backend_kind == "live":
            return LiveBackend.from_env()
        if self.mock_script_path:
            return MockBackend(MockScript.load(self.mock_script_path))
        return MockBackend(default_mock_script())

    def pipeline(self) -> Pipeline:
        return Pipeline(
            backend=self.backend(),
            taxonomy=self.taxonomy(),
            config=PipelineConfig(
                timeout_ms=self.timeout_ms,
                call_topology=self.topology.replace("-", "_"),
            ),
        )


def _merge_config(ctx: click.Context, param, value):
    # Config file fills any flag the user (or env) did not set.
    if value:
        defaults = json.loads(Path(value).read_text(encoding="utf-8"))
        ctx.default_map = {**defaults, **(ctx.default_map or {})}
    return value


@click.group()
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    callback=_merge_config,
    is_eager=True,
    expose_value=False,
    help="JSON config file; flags and env vars take precedence.",
)
@click.option("--taxonomy", envvar=ENV_TAXONOMY, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--backend", envvar=ENV_BACKEND, type=click.Choice(["mock", "live"]), default="mock"
)
@click.option("--mock-script", envvar=ENV_MOCK_SCRIPT, type=click.Path(exists=True, dir_okay=False))
@click.option("--timeout-ms", envvar=ENV_TIMEOUT_MS, type=int, default=600)
@click.option(
    "--topology",
    type=click.Choice(["combined", "two-call"]),
    default="combined",
    help="One combined backend call per request, or separate plan and tag calls.",
)
@click.pass_context
def main(ctx, taxonomy, backend, mock_script, timeout_ms, topology):
    """Query understanding for job-search-style relevance systems."""
    ctx.obj = AppContext(
        taxonomy_path=taxonomy,
        backend_kind=backend,
        mock_script_path=mock_script,
        timeout_ms=timeout_ms,
        topology=topology,
    )


def _load_profile(path: str | None) -> MemberProfile | None:
    if not path:
        return None
    return MemberProfile.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@main.command()
@click.option("--query", "query_text", required=True)
@click.option("--profile", "profile_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--locale")
@click.pass_obj
def understand(app: AppContext, query_text, profile_path, locale):
    """Run the full pipeline on one query."""
    pipeline = app.pipeline()
    try:
        result = pipeline.understand(
            Query(text=query_text, locale=locale), _load_profile(profile_path)
        )
    finally:
        pipeline.close()
    click.echo(json.dumps(result.to_dict(), ensure_ascii=False, indent=2))


@main.command()
@click.option("--query", "query_text", required=True)
@click.option("--profile", "profile_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def plan(app: AppContext, query_text, profile_path):
    """Classify one query and print its action plan."""
    decision = plan_query(
        Query(text=query_text),
        _load_profile(profile_path),
        app.backend(),
        timeout_ms=app.timeout_ms,
    )
    click.echo(
        json.dumps(
            {
                "route": decision.route.value,
                "actions": [a.value for a in decision.actions],
                "rationale": decision.rationale,
            },
            ensure_ascii=False,
            indent=2,
        )
    )


@main.command("rewrite")
@click.option("--query", "query_text", required=True)
@click.option(
    "--profile", "profile_path", required=True, type=click.Path(exists=True, dir_okay=False)
)
@click.pass_obj
def rewrite_cmd(app: AppContext, query_text, profile_path):
    """Detect self-reference slots and substitute profile values."""
    query = Query(text=query_text)
    profile = _load_profile(profile_path)
    slots = detect_slots(query, app.backend(), profile, timeout_ms=app.timeout_ms)
    outcome = rewrite(query, slots, profile, app.taxonomy())
    click.echo(
        json.dumps(
            {
                "rewritten": outcome.rewritten,
                "slots_filled": [
                    {"slot": f.slot, "profile_field": f.profile_field, "substituted": f.substituted}
                    for f in outcome.slots_filled
                ],
                "unfilled": list(outcome.unfilled),
            },
            ensure_ascii=False,
            indent=2,
        )
    )


@main.command("eval")
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False))
@click.option("--baseline", type=click.Path(exists=True, dir_okay=False),
              help="Earlier report JSON to diff against.")
@click.pass_obj
def eval_cmd(app: AppContext, dataset, out, baseline):
    """Compute per-tool precision/recall over a labeled dataset."""
    from .evaluation import MetricReport

    examples = load_labeled_examples(dataset)
    pipeline = app.pipeline()
    try:
        report = evaluate(examples, pipeline)
    finally:
        pipeline.close()
    click.echo(report.render_table())
    if out:
        Path(out).write_text(report.to_json() + "\n", encoding="utf-8")
    if baseline:
        previous = MetricReport.from_dict(json.loads(Path(baseline).read_text(encoding="utf-8")))
        diff = compare(previous, report)
        click.echo("")
        for delta in diff.deltas:
            click.echo(
                f"{delta.tool}: precision {_signed(delta.precision_delta)}"
                f" recall {_signed(delta.recall_delta)}"
            )


def _signed(value: float | None) -> str:
    return "n/a" if value is None else f"{value:+.3f}"


@main.command("schedule")
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["homo", "hetero"]), required=True)
@click.option("--batch-size", type=int, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--upsample/--no-upsample", "do_upsample", default=False,
              help="Balance task sizes before scheduling.")
@click.option("--curriculum", help="Comma-separated task order (homogeneous mode only).")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def schedule_cmd(dataset, mode, batch_size, seed, do_upsample, curriculum, out):
    """Build a batch manifest from a line-delimited task dataset."""
    datasets = load_task_datasets(dataset)
    if do_upsample:
        datasets = upsample_datasets(datasets, seed)
    manifest = schedule(
        datasets,
        mode=HOMOGENEOUS if mode == "homo" else HETEROGENEOUS,
        batch_size=batch_size,
        seed=seed,
        curriculum=curriculum.split(",") if curriculum else None,
    )
    Path(out).write_text(manifest.to_json() + "\n", encoding="utf-8")
    click.echo(f"wrote {len(manifest.batches)} batches to {out}")


@main.command("parse-stream")
@click.option("--separator", default="\n", help="Chunk delimiter in stdin (default: newline).")
def parse_stream(separator):
    """Feed stdin chunks through the streaming parser, one event per line."""
    data = sys.stdin.read()
    parser = StreamParser()
    chunks = data.split(separator) if separator else [data]
    for chunk in chunks:
        for event in parser.feed(chunk.encode("utf-8")):
            click.echo(json.dumps(event_to_dict(event), ensure_ascii=False))
    for event in parser.finish():
        click.echo(json.dumps(event_to_dict(event), ensure_ascii=False))


@main.group()
def tools():
    """Tool registry inspection."""


@tools.command("list")
def tools_list():
    """Print every registered tool with its argument schema."""
    for spec in default_registry().specs():
        args = ", ".join(
            f"{a.name}: {a.kind}{'' if a.required else '?'}" for a in spec.args
        )
        click.echo(f"{spec.name}({args}) -> {spec.produces.value}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8080)
@click.pass_obj
def serve(app: AppContext, host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(app.pipeline()), host=host, port=port)


if __name__ == "__main__":
    main()
