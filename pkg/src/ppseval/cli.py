"""Command-line client for the run-stage service.

Every subcommand speaks HTTP to the service endpoints. With --server the
requests go to a running instance; without it the app is mounted in-process
over an ASGI transport, so no daemon is needed for local runs. Paths in
requests refer to the service host's filesystem.
"""

import asyncio
import json
import sys

import click
import httpx


def _post(server: str | None, path: str, payload: dict) -> dict:
    async def call() -> httpx.Response:
        if server:
            async with httpx.AsyncClient(base_url=server, timeout=None) as client:
                return await client.post(path, json=payload)
        from .service import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://ppseval.internal", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    try:
        response = asyncio.run(call())
    except httpx.HTTPError as exc:
        raise click.ClickException(f"cannot reach service: {exc}") from exc
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise click.ClickException(f"{path} failed ({response.status_code}): {detail}")
    return response.json()


server_option = click.option(
    "--server", default=None, metavar="URL",
    help="Base URL of a running service; default runs the service in-process.",
)


@click.group()
def main():
    """Solve physics problems with LLM strategies, judge them, and report."""


@main.command()
@server_option
@click.option("--config", "config_path", required=True, type=click.Path(), help="Run config TOML.")
@click.option("--strategy", required=True,
              type=click.Choice(["baseline", "self_refine", "single_agent", "multi_agent"]))
@click.option("--dataset", default=None, type=click.Path(), help="Override the config's dataset path.")
@click.option("--limit", default=None, type=int, help="Solve only the first N problems after filtering.")
@click.option("--category", default=None, help="Only problems with this exact category.")
@click.option("--tier", default=None, type=click.Choice(["easy", "medium", "hard"], case_sensitive=False))
@click.option("--mock", "mock_script", default=None, type=click.Path(),
              help="Scripted mock backend (JSON matcher/response list) instead of live models.")
@click.option("--out", "output_path", default=None, type=click.Path(), help="Attempts file to write.")
def solve(server, config_path, strategy, dataset, limit, category, tier, mock_script, output_path):
    """Run one strategy over the dataset, writing an attempt/v1 JSONL file."""
    result = _post(server, "/solve", {
        "config_path": config_path, "strategy": strategy, "dataset": dataset,
        "limit": limit, "category": category, "tier": tier,
        "mock_script": mock_script, "output_path": output_path,
    })
    click.echo(f"attempts: {result['attempts_path']}")
    click.echo(
        f"completed {result['completed']}, failed {result['failed']}, "
        f"skipped {result['skipped']} (resume), live completions {result['completions_issued']}"
    )
    if result["failed"]:
        click.echo(f"failures recorded in {result['failures_path']}")


@main.command()
@server_option
@click.option("--config", "config_path", required=True, type=click.Path(), help="Run config TOML.")
@click.option("--attempts", "attempts_path", required=True, type=click.Path(),
              help="attempt/v1 JSONL produced by solve.")
@click.option("--dataset", default=None, type=click.Path(), help="Override the config's dataset path.")
@click.option("--mock", "mock_script", default=None, type=click.Path())
@click.option("--out", "output_path", default=None, type=click.Path(), help="Evaluations file to write.")
def judge(server, config_path, attempts_path, dataset, mock_script, output_path):
    """Judge every attempt against ground truth, writing an eval/v1 JSONL file."""
    result = _post(server, "/judge", {
        "config_path": config_path, "attempts_path": attempts_path,
        "dataset": dataset, "mock_script": mock_script, "output_path": output_path,
    })
    click.echo(f"evaluations: {result['evaluations_path']}")
    click.echo(
        f"judged {result['judged']}, failed {result['failed']}, skipped {result['skipped']}, "
        f"coverage {result['coverage']:.2f}"
    )


@main.command()
@server_option
@click.argument("evaluations", nargs=-1, required=True, type=click.Path())
@click.option("--config", "config_path", default=None, type=click.Path(),
              help="Run config TOML (supplies dataset, alpha, PPS weights).")
@click.option("--dataset", default=None, type=click.Path(), help="Dataset path for tier lookups.")
@click.option("--baseline", default=None, help="Strategy the others are compared against.")
@click.option("--alpha", default=None, type=float, help="Significance threshold.")
@click.option("--out-dir", "output_dir", required=True, type=click.Path(), help="Report directory.")
def report(server, evaluations, config_path, dataset, baseline, alpha, output_dir):
    """Tier table + category summary; significance tests when >= 2 strategies."""
    result = _post(server, "/report", {
        "evaluations_paths": list(evaluations), "output_dir": output_dir,
        "config_path": config_path, "dataset": dataset,
        "baseline": baseline, "alpha": alpha,
    })
    click.echo(result["tier_table_text"])
    if result["significance_text"]:
        click.echo(result["significance_text"])
    click.echo("category counts:")
    click.echo(result["category_summary_text"])
    click.echo(f"reports written next to {result['tier_table_csv_path']}")


@main.command()
@server_option
@click.option("--dataset", required=True, type=click.Path(), help="Dataset JSONL file.")
@click.option("--json", "as_json", is_flag=True, help="Print machine-readable JSON.")
def stats(server, dataset, as_json):
    """Descriptive statistics and category counts for a dataset file."""
    result = _post(server, "/stats", {"dataset": dataset})
    if as_json:
        click.echo(json.dumps(result, indent=2, sort_keys=True))
    else:
        click.echo(result["text"])


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
