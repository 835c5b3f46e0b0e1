"""Command-line interface.

Exit codes: 0 success, 1 error, 2 usage error, 3 fit stopped at the
iteration limit without converging.
"""

import logging
import sys

import click
import numpy as np

from skewfa import io as skio
from skewfa.ecm import FitConfig, e_step, factor_scores, map_labels
from skewfa.exceptions import SkewFAError
from skewfa.initialization import InitStrategy, best_of_restarts
from skewfa.metrics import ami, ari, ccr
from skewfa.model import Family, sample_mixture
from skewfa.selection import TABLE_COLUMNS, SelectionGrid, grid_search, parse_range

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2, 3
BLOCK = 10

FAMILIES = click.Choice([f.value for f in Family], case_sensitive=False)
INITS = click.Choice(["kmeans", "random", "nested"], case_sensitive=False)


def _fail(exc):
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_ERROR)


def _progress(it, loglik, gap):
    if it % BLOCK == 0:
        gap_txt = "nan" if gap is None else f"{gap:.3e}"
        click.echo(f"iteration={it} loglik={loglik:.10g} aitken_gap={gap_txt}", err=True)


def _summary(report):
    click.echo(
        f"loglik={report.loglik!r} bic={float(report.bic)!r} icl={float(report.icl)!r} "
        f"iterations={report.iterations} converged={str(report.converged).lower()}"
    )


@click.group()
@click.option("--threads", type=click.IntRange(min=1), default=None,
              help="Worker threads for the E-step (falls back to SKEWFA_THREADS).")
@click.option("-v", "--verbose", is_flag=True, help="Log progress details.")
@click.pass_context
def main(ctx, threads, verbose):
    """Mixtures of skew-t factor analyzers."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    ctx.ensure_object(dict)
    ctx.obj["threads"] = threads


def _fit_options(f):
    opts = [
        click.option("--data", required=True, type=click.Path(dir_okay=False), help="Numeric CSV, one row per observation."),
        click.option("--family", type=FAMILIES, default="cfustfa", show_default=True),
        click.option("--init", "init", type=INITS, default="kmeans", show_default=True),
        click.option("--restarts", type=click.IntRange(min=1), default=1, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--tol", type=click.FloatRange(min=0, min_open=True), default=1e-6, show_default=True),
        click.option("--max-iter", type=click.IntRange(min=1), default=2000, show_default=True),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


@main.command()
@click.option("--g", type=click.IntRange(min=1), required=True, help="Number of components.")
@click.option("--q", type=click.IntRange(min=1), required=True, help="Number of factors.")
@click.option("--r", type=click.IntRange(min=0), default=1, show_default=True, help="Skewing dimension.")
@_fit_options
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Model file to write.")
@click.pass_context
def fit(ctx, g, q, r, data, family, init, restarts, seed, tol, max_iter, out):
    """Fit one model and write it as JSON."""
    try:
        Y = skio.read_data(data)
        cfg = FitConfig(g=g, q=q, r=r, family=family, tol=tol, max_iter=max_iter, init=init,
                        seed=seed, restarts=restarts, threads=ctx.obj["threads"])
        report = best_of_restarts(Y, cfg, InitStrategy(init, restarts, seed), on_iteration=_progress)
        skio.save_model(out, report.model, report)
    except (SkewFAError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        _fail(exc)
    _summary(report)
    sys.exit(EXIT_OK if report.converged else EXIT_NOT_CONVERGED)


def _cap(value):
    text = str(value).lower()
    if text == "auto":
        return "auto"
    if text == "none":
        return None
    try:
        return int(text)
    except ValueError:
        raise click.BadParameter("expected 'auto', 'none' or an integer") from None


@main.command()
@click.option("--g", "g_range", default="1:3", show_default=True, help="Component range 'a:b'.")
@click.option("--q", "q_range", default="1:3", show_default=True, help="Factor range 'a:b'.")
@click.option("--r", "r_range", default="1:2", show_default=True, help="Skewing-dimension range 'a:b'.")
@click.option("--criterion", type=click.Choice(["bic", "icl"]), default="bic", show_default=True)
@click.option("--param-cap", default="auto", show_default=True,
              help="'auto' (fewer parameters than the full mixture), 'none', or a maximum count.")
@_fit_options
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Winning model file.")
@click.option("--table", required=True, type=click.Path(dir_okay=False), help="Selection table CSV.")
@click.pass_context
def select(ctx, g_range, q_range, r_range, criterion, param_cap, data, family, init, restarts, seed, tol,
           max_iter, out, table):
    """Fit a grid of (g, q, r) and keep the criterion minimiser."""
    cap = _cap(param_cap)
    try:
        grid = SelectionGrid(parse_range(g_range), parse_range(q_range), parse_range(r_range), criterion, cap)
    except SkewFAError as exc:
        raise click.UsageError(str(exc)) from None
    try:
        Y = skio.read_data(data)
        base = FitConfig(g=1, q=1, r=1, family=family, tol=tol, max_iter=max_iter, init=init, seed=seed,
                         restarts=restarts, threads=ctx.obj["threads"])

        def on_cell(row):
            click.echo("cell " + " ".join(f"{k}={row[k]}" for k in TABLE_COLUMNS), err=True)

        best, rows = grid_search(Y, grid, base, on_cell=on_cell)
        skio.write_csv(table, ([row[k] for k in TABLE_COLUMNS] for row in rows), header=TABLE_COLUMNS)
        skio.save_model(out, best.model, best)
    except (SkewFAError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        _fail(exc)
    p, q, r = best.model.dims
    click.echo(f"g={best.model.g} q={q} r={r} ", nl=False)
    _summary(best)
    sys.exit(EXIT_OK if best.converged else EXIT_NOT_CONVERGED)


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--data", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def score(ctx, model_path, data, out):
    """MAP labels, posteriors and factor scores for each observation."""
    try:
        model, meta = skio.load_model(model_path)
        Y = skio.read_data(data)
        if Y.shape[1] != model.p:
            raise ValueError(f"data has {Y.shape[1]} columns but the model has p={model.p}")
        seed = int((meta or {}).get("seed", 0))
        stats = e_step(model, Y, seed, ctx.obj["threads"])
        labels = map_labels(stats.z)
        scores = factor_scores(model, Y, stats)
        header = ["label"] + [f"post_{i + 1}" for i in range(model.g)] + [f"score_{k + 1}" for k in range(model.q)]
        rows = (
            [int(labels[j])] + list(stats.z[:, j]) + list(scores[j]) for j in range(Y.shape[0])
        )
        skio.write_csv(out, rows, header=header)
    except (SkewFAError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        _fail(exc)


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--n", type=click.IntRange(min=1), required=True, help="Number of draws.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--labels", is_flag=True, help="Append the generating component as a 'label' column.")
def sample(model_path, n, seed, out, labels):
    """Draw observations from a fitted or hand-written model."""
    try:
        model, _ = skio.load_model(model_path)
        Y, lab = sample_mixture(model, n, seed)
        header = [f"y{k + 1}" for k in range(model.p)]
        if labels:
            header.append("label")
            rows = ([*Y[j], int(lab[j])] for j in range(n))
        else:
            rows = (Y[j] for j in range(n))
        skio.write_csv(out, rows, header=header)
    except (SkewFAError, ValueError, OSError) as exc:
        _fail(exc)


@main.command()
@click.option("--pred", required=True, type=click.Path(dir_okay=False))
@click.option("--truth", required=True, type=click.Path(dir_okay=False))
def metrics(pred, truth):
    """Print CCR, ARI and AMI between two label files."""
    try:
        a = skio.read_labels(pred)
        b = skio.read_labels(truth)
        values = (ccr(a, b), ari(a, b), ami(a, b))
    except (SkewFAError, ValueError, OSError) as exc:
        _fail(exc)
    for key, val in zip(("ccr", "ari", "ami"), values):
        click.echo(f"{key}={val!r}")


if __name__ == "__main__":
    main()
