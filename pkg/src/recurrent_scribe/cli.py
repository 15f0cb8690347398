"""Command-line front end: create sessions, step them, run, export, serve."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .config import EngineSettings
from .engine import RecurrenceEngine, derive_session_id
from .errors import ScribeError
from .persistence import (
    export_transcript,
    load_session,
    save_session,
    session_path,
    store_path,
)
from .providers import ProviderConfig, make_provider
from .service import ServiceConfig, create_app
from .state import Plan, SessionMeta


def _provider_config(ctx_obj: dict) -> ProviderConfig:
    if ctx_obj["provider"] == "mock":
        return ProviderConfig(kind="mock", mock_seed=ctx_obj["seed"])
    return ProviderConfig(
        kind="http-chat",
        endpoint=ctx_obj["endpoint"] or "",
        model_name=ctx_obj["model"],
        embed_endpoint=ctx_obj["embed_endpoint"] or "",
        embed_dimension=ctx_obj["embed_dimension"],
    )


def _engine(ctx_obj: dict) -> RecurrenceEngine:
    return RecurrenceEngine(make_provider(_provider_config(ctx_obj)), EngineSettings())


def _load(ctx_obj: dict, session_id: str):
    path = session_path(ctx_obj["data_dir"], session_id)
    if not path.is_file():
        raise click.ClickException(f"no session {session_id!r} under {ctx_obj['data_dir']}")
    return load_session(path)


def _save(ctx_obj: dict, state, audit) -> None:
    save_session(state, audit, session_path(ctx_obj["data_dir"], state.id))


def _echo_plans(state) -> None:
    label = "choices" if state.meta.mode == "fiction" else "plans"
    click.echo(f"\nPending {label}:")
    for i, plan in enumerate(state.pending_plans):
        click.echo(f"  [{i}] {plan.text}")


@click.group()
@click.option("--data-dir", type=click.Path(path_type=Path), default=Path("./scribe-data"),
              show_default=True, help="Directory holding session files and memory stores.")
@click.option("--provider", type=click.Choice(["mock", "http"]), default="mock",
              show_default=True, help="Backend: deterministic mock or an HTTP chat endpoint.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for session ids, the mock backend, and selector fallbacks.")
@click.option("--endpoint", default=None, help="Chat-completions URL (http provider).")
@click.option("--embed-endpoint", default=None, help="Embeddings URL (http provider).")
@click.option("--model", default="gpt-4", show_default=True,
              help="Model name sent to the http provider.")
@click.option("--embed-dimension", type=int, default=64, show_default=True,
              help="Embedding dimension the provider returns.")
@click.option("-v", "--verbose", is_flag=True, help="Log engine warnings to stderr.")
@click.pass_context
def cli(ctx, data_dir, provider, seed, endpoint, embed_endpoint, model,
        embed_dimension, verbose):
    """Long-form writing sessions driven by a recurrent prompting loop."""
    logging.basicConfig(level=logging.WARNING if verbose else logging.ERROR,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    if provider == "http" and not endpoint:
        raise click.UsageError("--provider http requires --endpoint")
    ctx.obj = {
        "data_dir": data_dir, "provider": provider, "seed": seed,
        "endpoint": endpoint, "embed_endpoint": embed_endpoint,
        "model": model, "embed_dimension": embed_dimension,
    }


@cli.command()
@click.option("--title", required=True)
@click.option("--genre", required=True)
@click.option("--background", required=True,
              help="A short paragraph describing the story's starting point.")
@click.option("--mode", type=click.Choice(["writer", "fiction"]), default="writer",
              show_default=True)
@click.option("--initial-memory", default=None,
              help="Seed the short-term memory by hand instead of generating it.")
@click.option("--initial-plan", default=None,
              help="Seed the first plan by hand instead of generating candidates.")
@click.pass_obj
def init(obj, title, genre, background, mode, initial_memory, initial_plan):
    """Create a session and generate its opening."""
    meta = SessionMeta(title=title, genre=genre, background=background, mode=mode,
                       initial_short_term=initial_memory, initial_plan=initial_plan)
    engine = _engine(obj)
    session_id = derive_session_id(meta, obj["seed"])
    state = engine.init_session(meta, obj["seed"],
                                store_dir=store_path(obj["data_dir"], session_id),
                                session_id=session_id)
    _save(obj, state, [])
    click.echo(f"session {state.id}")
    click.echo(f"\n{state.last_content.text}")
    _echo_plans(state)


@cli.command()
@click.argument("session_id")
@click.option("--plan-index", type=int, default=None,
              help="0-based index into the pending plans.")
@click.option("--plan-text", default=None, help="Write the next plan yourself.")
@click.pass_obj
def step(obj, session_id, plan_index, plan_text):
    """Advance a session by one step with the chosen plan."""
    if (plan_index is None) == (plan_text is None):
        raise click.UsageError("provide exactly one of --plan-index or --plan-text")
    state, audit = _load(obj, session_id)
    if plan_text is not None:
        plan = Plan(plan_text, origin="human")
    else:
        if not 0 <= plan_index < len(state.pending_plans):
            raise click.ClickException(
                f"plan index {plan_index} out of range for "
                f"{len(state.pending_plans)} plans")
        plan = state.pending_plans[plan_index]
    engine = _engine(obj)
    state, record = engine.step(state, plan)
    audit.append(record)
    _save(obj, state, audit)
    click.echo(f"step {state.step}")
    click.echo(f"\n{state.last_content.text}")
    _echo_plans(state)


@cli.command()
@click.argument("session_id")
@click.option("--steps", type=int, required=True, help="Number of autonomous steps.")
@click.pass_obj
def run(obj, session_id, steps):
    """Run the session autonomously: the model picks its own plans."""
    state, audit = _load(obj, session_id)
    engine = _engine(obj)

    def persist(st, record):
        audit.append(record)
        _save(obj, st, audit)
        click.echo(f"step {st.step}: +{record.output.content.word_count} words")

    state, report = engine.run_autonomous(state, steps, on_record=persist)
    if not report.ok:
        raise click.ClickException(
            f"stopped at step {report.failed_step} after {report.completed} "
            f"of {report.requested}: {report.error}")
    click.echo(f"completed {report.completed} steps; session at step {state.step}")


@cli.command()
@click.argument("session_id")
@click.option("--format", "fmt", type=click.Choice(["plain", "markdown"]),
              default="plain", show_default=True)
@click.option("-o", "--output", type=click.Path(path_type=Path), default=None,
              help="Write to a file instead of stdout.")
@click.pass_obj
def export(obj, session_id, fmt, output):
    """Print or save the session's full transcript."""
    state, _ = _load(obj, session_id)
    text = export_transcript(state, fmt)
    if output is None:
        click.echo(text)
    else:
        output.write_text(text + "\n", encoding="utf-8")
        click.echo(f"wrote {output}")


@cli.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="Service config JSON; omit to serve from the global flags.")
@click.option("--host", default=None, help="Override the bind host.")
@click.option("--port", type=int, default=None, help="Override the bind port.")
@click.pass_obj
def serve(obj, config_path, host, port):
    """Serve the HTTP API."""
    import uvicorn

    if config_path is not None:
        config = ServiceConfig.from_file(config_path)
    else:
        config = ServiceConfig(data_dir=obj["data_dir"],
                               provider=_provider_config(obj))
    app = create_app(config, provider=None)
    uvicorn.run(app, host=host or config.host, port=port or config.port,
                log_level="warning")


def main():
    try:
        cli(standalone_mode=True)
    except ScribeError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
