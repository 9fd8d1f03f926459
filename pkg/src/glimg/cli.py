"""Command-line front end: prepare / train / recommend / evaluate / sweep / serve.

Thin wrapper over glimg.pipeline; ``serve`` starts the HTTP service and
``recommend --url`` talks to a running one instead of loading the model
locally. Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import json
import sys
from dataclasses import replace

import click

from .engine import HyperParams
from .errors import DataError, ModelFormatError, NumericalError
from . import pipeline

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def _params_options(fn):
    for option in reversed([
        click.option("--sigma", type=float, default=0.5, show_default=True, help="Similarity kernel width."),
        click.option("--mu", type=float, default=1.0, show_default=True, help="Fitting-term weight."),
        click.option("--gamma", type=float, default=1.0, show_default=True, help="Degree-suppression weight."),
        click.option("--g", type=float, default=0.5, show_default=True, help="Global/local balance in [0,1]; 1 = global graph only."),
        click.option("--clusters", type=int, default=5, show_default=True, help="Number of user clusters."),
        click.option("--seed", type=int, default=0, show_default=True),
    ]):
        fn = option(fn)
    return fn


def _make_params(sigma, mu, gamma, g, clusters, seed) -> HyperParams:
    return HyperParams(sigma=sigma, mu=mu, gamma=gamma, g=g, k=clusters, seed=seed)


@click.group()
def cli():
    """Top-N recommender built on blended global/local item graphs."""


@cli.command()
@click.option("--data", required=True, type=click.Path(), help="Ratings file.")
@click.option("--format", "data_format", type=click.Choice(["csv", "tsv", "movielens-dat"]), default="csv", show_default=True)
@click.option("--min-ratings", type=int, default=30, show_default=True, help="Drop users/items below this rating count (iterated to a fixed point).")
@click.option("--implicit", is_flag=True, help="Replace all ratings with 1.")
@click.option("--ratios", nargs=3, type=float, default=(0.8, 0.1, 0.1), show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Output directory for split files.")
def prepare(data, data_format, min_ratings, implicit, ratios, seed, out):
    """Load, filter, and split a ratings file; write split manifests."""
    config = pipeline.RunConfig(
        data_path=data, data_format=data_format, min_ratings=min_ratings,
        implicit=implicit, ratios=tuple(ratios), split_seed=seed, out_dir=out,
    )
    split = pipeline.prepare(config)
    counts = {name: part.nnz for name, part in zip(("train", "validation", "test"), split)}
    click.echo(f"prepared {split.train.num_users} users x {split.train.num_items} items -> {out}")
    click.echo(f"entries: {counts}")


@cli.command()
@click.option("--out", required=True, type=click.Path(), help="Directory holding the prepared split; the model is written here.")
@click.option("--model", "model_path", type=click.Path(), default=None, help="Model file path (default: <out>/model.bin).")
@_params_options
def train(out, model_path, sigma, mu, gamma, g, clusters, seed):
    """Fit the model offline and persist it with a timing log."""
    config = pipeline.RunConfig(params=_make_params(sigma, mu, gamma, g, clusters, seed), out_dir=out)
    path, timing = pipeline.train(config, model_path=model_path)
    click.echo(f"model written to {path}")
    click.echo(f"fit took {timing['phase_seconds']['fit']:.2f}s "
               f"({timing['num_users']} users, {timing['num_items']} items)")


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--out", "split_dir", required=True, type=click.Path(), help="Directory with the prepared split.")
@click.option("--user", required=True, help="User id to recommend for.")
@click.option("--n", type=int, default=10, show_default=True)
@click.option("--url", default=None, help="Base URL of a running service; when set, the command is a thin HTTP client.")
def recommend(model_path, split_dir, user, n, url):
    """Print the top-N unrated items for a user."""
    if url is not None:
        import urllib.request

        body = json.dumps({"name": "default", "user_id": user, "n": n}).encode()
        req = urllib.request.Request(
            url.rstrip("/") + "/recommend", data=body,
            headers={"Content-Type": "application/json"},
        )
        with urllib.request.urlopen(req) as resp:
            payload = json.load(resp)
        rec_items = [(i["item_id"], i["score"]) for i in payload["items"]]
        latency, fallback = payload["latency_ms"], payload["fallback"]
    else:
        rec = pipeline.recommend(model_path, split_dir, user, n)
        rec_items, latency, fallback = rec.items, rec.latency_ms, rec.fallback
    if fallback:
        click.echo(f"user {user!r} not in training data; falling back to popularity ranking")
    for rank, (item, score) in enumerate(rec_items, start=1):
        click.echo(f"{rank:>3}  {item}  {score:.6f}")
    click.echo(f"latency: {latency:.2f} ms")


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--out", "split_dir", required=True, type=click.Path(), help="Directory with the prepared split; reports are written here.")
@click.option("--n", "n_list", type=int, multiple=True, default=(10, 50), show_default=True, help="List lengths to evaluate (repeatable).")
@click.option("--validation", is_flag=True, help="Evaluate on the validation split instead of test.")
def evaluate(model_path, split_dir, n_list, validation):
    """Evaluate a model file on the held-out split; write JSON + text reports."""
    report = pipeline.evaluate_model(
        model_path, split_dir, list(n_list), out_dir=split_dir, use_validation=validation,
    )
    click.echo(report.to_table())


@cli.command()
@click.option("--out", required=True, type=click.Path(), help="Directory with the prepared split; sweep.csv is written here.")
@click.option("--sweep", "sweep_specs", multiple=True, required=True, metavar="PARAM=V1,V2,...",
              help="Grid axis, e.g. --sweep g=0,0.5,1 --sweep mu=0.1,1,10.")
@click.option("--n", "n_list", type=int, multiple=True, default=(10, 50), show_default=True)
@_params_options
def sweep(out, sweep_specs, n_list, sigma, mu, gamma, g, clusters, seed):
    """Grid-sweep hyperparameters; select on validation NDCG, report test."""
    grid = {}
    for spec in sweep_specs:
        if "=" not in spec:
            raise click.UsageError(f"bad sweep spec {spec!r}; expected param=v1,v2,...")
        name, _, values = spec.partition("=")
        try:
            grid[name.strip()] = [float(v) for v in values.split(",") if v != ""]
        except ValueError:
            raise click.UsageError(f"bad sweep values in {spec!r}")
    config = pipeline.RunConfig(
        params=_make_params(sigma, mu, gamma, g, clusters, seed),
        n_list=tuple(n_list), out_dir=out,
    )
    rows, best = pipeline.sweep(config, grid)
    click.echo(f"swept {len(rows)} grid points -> {out}/sweep.csv")
    click.echo("best by validation NDCG: " + json.dumps(best, sort_keys=True))


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("glimg.service.app:app", host=host, port=port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    except (DataError, ModelFormatError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
