"""Command line front end.

Every flag can also be set through the environment as
``PCORESET_<COMMAND>_<FLAG>``, e.g. ``PCORESET_BUILD_EPSILON=0.5``.

Exit codes: 0 success, 2 usage error, 3 I/O or file-format error,
4 violated precondition, 5 verification failure.
"""
from __future__ import annotations

import functools
import sys
import time

import click

from . import bench as bench_mod
from .coreset import (
    CoresetFormatError,
    CoresetParams,
    PreconditionError,
    build_projective_coreset,
    coreset_cost,
    deserialize_coreset,
    exact_svd_coreset,
    projective_rank,
    serialize_coreset,
)
from .formats import FORMATS, MatrixFormatError, load_matrix, open_row_stream, save_matrix
from .geometry import loads_closed_set
from .verify import run_suite

EXIT_IO = 3
EXIT_PRECONDITION = 4
EXIT_VERIFY = 5


def _emit(**kv):
    for key, val in kv.items():
        if isinstance(val, float):
            val = repr(val)
        click.echo(f"{key}={val}")


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PreconditionError as exc:
            click.echo(f"error: precondition violated: {exc}", err=True)
            sys.exit(EXIT_PRECONDITION)
        except (MatrixFormatError, CoresetFormatError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)
    return wrapper


def _problem_options(fn):
    opts = [
        click.option("--k", "k", type=int, default=1, show_default=True, help="number of subspaces"),
        click.option("--j", "j", type=int, default=1, show_default=True, help="subspace dimension"),
        click.option("--epsilon", type=float, default=0.5, show_default=True),
        click.option("--delta", type=float, default=0.1, show_default=True),
        click.option("--constant-c", "constant", type=float, default=1.0, show_default=True,
                     help="constant in the sketch-size formula"),
        click.option("--sketch-epsilon", type=float, default=None,
                     help="accuracy used for the sketch size (defaults to --epsilon)"),
        click.option("--rank-override", type=int, default=None,
                     help="use this projection rank instead of ceil(52 k(j+1)/eps^2)"),
        click.option("--affine", is_flag=True, help="queries may be affine subspaces"),
        click.option("--seed", type=int, default=0, show_default=True),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _input_options(fn):
    fn = click.option("--format", "fmt", type=click.Choice(FORMATS), default=None,
                      help="input format (guessed from the extension if omitted)")(fn)
    fn = click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False),
                      help="input matrix file")(fn)
    return fn


def _params(k, j, epsilon, delta, constant, sketch_epsilon, rank_override, affine):
    return CoresetParams(k, j, epsilon, delta, affine, rank_override, constant, sketch_epsilon)


@click.group(context_settings={"auto_envvar_prefix": "PCORESET"})
def main():
    """Randomized coresets for subspace and projective clustering."""


@main.command()
@_input_options
@click.option("--output", required=True, type=click.Path(dir_okay=False), help="coreset file")
@_problem_options
@click.option("--streaming", is_flag=True, help="read the input in two sequential passes")
@click.option("--delta-mode", type=click.Choice(["estimated", "exact"]), default="estimated",
              show_default=True)
@click.option("--exact-baseline", is_flag=True, help="also time the exact-SVD construction")
@click.option("--block-rows", type=int, default=4096, show_default=True)
@_guarded
def build(input_path, fmt, output, k, j, epsilon, delta, constant, sketch_epsilon,
          rank_override, affine, seed, streaming, delta_mode, exact_baseline, block_rows):
    """Build a coreset and write it to OUTPUT."""
    params = _params(k, j, epsilon, delta, constant, sketch_epsilon, rank_override, affine)
    if streaming:
        if delta_mode == "exact" or exact_baseline:
            raise PreconditionError("--streaming cannot be combined with exact SVD work "
                                    "(--delta-mode exact / --exact-baseline)")
        source = open_row_stream(input_path, fmt)
        t0 = time.perf_counter()
        cs = build_projective_coreset(source, params, seed, block_rows=block_rows)
        load_s = 0.0
        passes = source.passes
    else:
        t0 = time.perf_counter()
        source = load_matrix(input_path, fmt)
        load_s = time.perf_counter() - t0
        cs = build_projective_coreset(source, params, seed, delta_mode=delta_mode,
                                      block_rows=block_rows)
        passes = 2
    with open(output, "wb") as fh:
        fh.write(serialize_coreset(cs))
    tm = cs.timings
    _emit(n=cs.n, d=cs.d, nnz=cs.nnz, k=k, j=j, j_star=params.j_star, m_star=cs.rank,
          m_star_requested=projective_rank(params, cs.d), r=cs.sketch_rows,
          tail_energy=cs.tail_energy, delta_mode=cs.delta_mode, passes=passes,
          time_load=load_s, time_sketch=tm.sketch, time_orthonormalize=tm.orthonormalize,
          time_small_svd=tm.small_svd, time_projection=tm.projection, time_total=tm.total)
    if exact_baseline:
        ex = exact_svd_coreset(source, params)
        _emit(exact_tail_energy=ex.tail_energy, exact_time_svd=ex.timings.small_svd,
              exact_time_total=ex.timings.total)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False),
              help="coreset file")
@_guarded
def info(input_path):
    """Print the header fields of a coreset file."""
    with open(input_path, "rb") as fh:
        cs = deserialize_coreset(fh.read())
    p = cs.params
    _emit(n=cs.n, d=cs.d, m_star=cs.rank, k=p.k, j=p.j, j_star=p.j_star, epsilon=p.epsilon,
          delta=p.delta, affine=int(p.affine),
          rank_override=p.rank_override if p.rank_override is not None else "none",
          constant_c=p.constant, r=cs.sketch_rows, tail_energy=cs.tail_energy, seed=cs.seed,
          delta_mode=cs.delta_mode, method=cs.method, problem=cs.problem, nnz=cs.nnz,
          frob_sq=cs.frob_sq, construction_time=cs.construction_time)


@main.command()
@click.option("--coreset", "coreset_path", required=True, type=click.Path(dir_okay=False))
@click.option("--closed-set", "closed_set_path", required=True, type=click.Path(dir_okay=False))
@_guarded
def cost(coreset_path, closed_set_path):
    """Evaluate dist^2(A*, C) + Delta* for a closed set in text format."""
    with open(coreset_path, "rb") as fh:
        cs = deserialize_coreset(fh.read())
    with open(closed_set_path) as fh:
        try:
            C = loads_closed_set(fh.read())
        except ValueError as exc:
            raise MatrixFormatError(str(exc), path=closed_set_path) from None
    _emit(cost=coreset_cost(cs, C))


@main.command()
@_input_options
@_problem_options
@click.option("--closed-sets", "n_closed_sets", type=int, default=50, show_default=True)
@click.option("--seeds", "n_seeds", type=int, default=20, show_default=True)
@click.option("--offset-scale", type=float, default=1.0, show_default=True)
@click.option("--delta-mode", type=click.Choice(["estimated", "exact"]), default="estimated",
              show_default=True)
@click.option("--machine", is_flag=True, help="key=value output instead of text")
@_guarded
def verify(input_path, fmt, k, j, epsilon, delta, constant, sketch_epsilon, rank_override,
           affine, seed, n_closed_sets, n_seeds, offset_scale, delta_mode, machine):
    """Run the bound checks over many seeds; exit 5 if any report fails."""
    params = _params(k, j, epsilon, delta, constant, sketch_epsilon, rank_override, affine)
    A = load_matrix(input_path, fmt)
    reports = run_suite(A, params, n_closed_sets, n_seeds, seed, offset_scale, delta_mode)
    for rep in reports:
        click.echo(rep.key_values() if machine else rep.render())
    if not all(rep.passed for rep in reports):
        sys.exit(EXIT_VERIFY)


@main.command()
@click.option("--grid", required=True,
              help="comma-separated NxD@DENSITY:RANK entries, e.g. 2000x500@0.01:50")
@click.option("--k", "k", type=int, default=1, show_default=True)
@click.option("--j", "j", type=int, default=1, show_default=True)
@click.option("--epsilon", type=float, default=0.5, show_default=True)
@click.option("--delta", type=float, default=0.1, show_default=True)
@click.option("--constant-c", "constant", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--closed-sets", "n_closed_sets", type=int, default=5, show_default=True)
@click.option("--exact-baseline/--no-exact-baseline", default=True, show_default=True)
@click.option("--output", type=click.Path(dir_okay=False), default=None,
              help="also write the table here")
@_guarded
def bench(grid, k, j, epsilon, delta, constant, seed, n_closed_sets, exact_baseline, output):
    """Time randomized vs exact construction; prints a tab-separated table."""
    try:
        entries = bench_mod.parse_grid(grid)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--grid")
    notices = []
    rows = bench_mod.run_bench(entries, k, j, epsilon, delta, constant, seed, n_closed_sets,
                               exact_baseline, notices)
    for note in notices:
        click.echo(note, err=True)
    table = bench_mod.format_table(rows)
    click.echo(table, nl=False)
    if output:
        with open(output, "w") as fh:
            fh.write(table)


@main.command()
@click.option("--rows", "n", type=int, required=True)
@click.option("--cols", "d", type=int, required=True)
@click.option("--density", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--output", required=True, type=click.Path(dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(FORMATS), default=None)
@_guarded
def generate(n, d, density, seed, output, fmt):
    """Write a random Gaussian matrix (sparse when density < 1)."""
    A = bench_mod.random_matrix(n, d, density, seed)
    save_matrix(output, A, fmt)
    _emit(n=A.n, d=A.d, nnz=A.nnz)


if __name__ == "__main__":
    main()
