"""Command line interface: a thin client over the model pipeline.

Four subcommands mirror the HTTP endpoints: ``validate``, ``check``,
``reconstruct`` and ``matrices``; ``serve`` starts the HTTP service
itself.  Model documents are JSON files (``-`` reads stdin).

Exit codes: 0 for success (and a Smooth classification), 2 when a
replacement is non-identifiable, 3 when classification is inconclusive
or an iteration failed to converge, 1 for usage, parse, or validation
errors.

JSON output is byte-deterministic: floats are printed with 17
significant digits, enough to round-trip every double exactly, and key
order is fixed by construction.  The ``MLLP_SEED`` environment
variable supplies the default sampling seed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Any

import click

from .model import (
    NonIdentifiableModelError,
    check_model,
    check_to_dict,
    matrix_table,
    parse_model,
    pipeline_to_dict,
    run_pipeline,
)
from .params import NonConvergenceError
from .tables import MllpError

__all__ = ["cli", "main", "dumps_canonical"]

_CLASS_EXIT = {"Smooth": 0, "NonIdentifiable": 2, "Inconclusive": 3}


def dumps_canonical(obj: Any) -> str:
    """Deterministic JSON: 17-significant-digit floats, fixed separators.

    Non-finite floats (possible in diagnostic evidence) become null,
    keeping the output standard JSON.
    """
    out: list[str] = []

    def emit(o: Any) -> None:
        if o is None:
            out.append("null")
        elif o is True:
            out.append("true")
        elif o is False:
            out.append("false")
        elif isinstance(o, float):
            out.append(format(o, ".17g") if math.isfinite(o) else "null")
        elif isinstance(o, int):
            out.append(str(o))
        elif isinstance(o, str):
            out.append(json.dumps(o, ensure_ascii=False))
        elif isinstance(o, (list, tuple)):
            out.append("[")
            for i, item in enumerate(o):
                if i:
                    out.append(",")
                emit(item)
            out.append("]")
        elif isinstance(o, dict):
            out.append("{")
            for i, (key, value) in enumerate(o.items()):
                if i:
                    out.append(",")
                out.append(json.dumps(str(key), ensure_ascii=False))
                out.append(":")
                emit(value)
            out.append("}")
        else:
            raise TypeError(f"cannot serialize {type(o).__name__}")

    emit(obj)
    return "".join(out)


def _default_seed() -> int:
    raw = os.environ.get("MLLP_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise click.ClickException(f"MLLP_SEED must be an integer, got {raw!r}") from None


def _read_model(path: str):
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = parse_model(text)
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
    return model


def _write_output(text: str, out: str | None) -> None:
    if out is None or out == "-":
        click.echo(text, nl=not text.endswith("\n"))
    else:
        Path(out).write_text(text)


def _fail(exc: Exception, code: int, as_json: bool) -> None:
    if as_json:
        payload: dict[str, Any] = {
            "error": {"type": type(exc).__name__, "message": str(exc)}
        }
        if isinstance(exc, NonIdentifiableModelError):
            payload["error"]["verdict"] = exc.verdict.to_dict()
        click.echo(dumps_canonical(payload))
    else:
        click.echo(f"error: {exc}", err=True)
    sys.exit(code)


class _Group(click.Group):
    """Click group whose usage errors exit with code 1 instead of 2."""

    def main(self, *args: Any, **kwargs: Any) -> Any:  # noqa: D102
        kwargs["standalone_mode"] = False
        try:
            return super().main(*args, **kwargs)
        except click.exceptions.Exit as exc:
            sys.exit(exc.exit_code)
        except click.ClickException as exc:
            exc.show()
            sys.exit(1)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(1)


@click.group(cls=_Group)
def cli() -> None:
    """Marginal log-linear parameterizations of discrete distributions."""


@cli.command()
@click.argument("model", type=str)
def validate(model: str) -> None:
    """Parse a model document and report whether it is well formed."""
    try:
        parsed = _read_model(model)
    except FileNotFoundError:
        click.echo(f"error: no such file: {model}", err=True)
        sys.exit(1)
    except MllpError as exc:
        click.echo(f"invalid: {exc}", err=True)
        sys.exit(1)
    click.echo(
        f"ok: {parsed.spec.n_vars} variables, {len(parsed.margins)} margins, "
        f"{sum(len(b.statements) for b in parsed.margins)} statements"
    )


@cli.command()
@click.argument("model", type=str)
@click.option("--trials", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--seed", type=int, default=None, help="Sampling seed (default: MLLP_SEED or 0).")
@click.option("--json", "as_json", is_flag=True, help="Emit the full report as JSON.")
def check(model: str, trials: int, seed: int | None, as_json: bool) -> None:
    """Classify the replacement structure of a model."""
    seed = _default_seed() if seed is None else seed
    try:
        parsed = _read_model(model)
        report = check_model(parsed, trials=trials, seed=seed)
    except MllpError as exc:
        _fail(exc, 1, as_json)
        return
    if as_json:
        click.echo(dumps_canonical(check_to_dict(report)))
    else:
        for m in report.margins:
            line = f"margin {list(m.margin.vars)}: "
            if not m.has_duplication:
                line += "no re-constrained sets"
            else:
                line += f"{m.verdict.classification} ({m.verdict.certificate})"
                if m.context is not None:
                    line += f"; context: {m.context.describe()}"
                line += f"; plan {m.plan_source}"
            click.echo(line)
        click.echo(f"classification: {report.classification}")
    sys.exit(_CLASS_EXIT[report.classification])


@cli.command()
@click.argument("model", type=str)
@click.option("--trials", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--seed", type=int, default=None, help="Sampling seed (default: MLLP_SEED or 0).")
@click.option("--json", "as_json", is_flag=True, help="Emit distributions and evidence as JSON.")
@click.option("--out", type=str, default=None, help="Write to a file instead of stdout.")
def reconstruct(model: str, trials: int, seed: int | None, as_json: bool, out: str | None) -> None:
    """Reconstruct every margin and print the joint distribution."""
    seed = _default_seed() if seed is None else seed
    try:
        parsed = _read_model(model)
        result = run_pipeline(parsed, trials=trials, seed=seed)
    except NonIdentifiableModelError as exc:
        _fail(exc, 2, as_json)
        return
    except NonConvergenceError as exc:
        _fail(exc, 3, as_json)
        return
    except MllpError as exc:
        _fail(exc, 1, as_json)
        return
    if as_json:
        _write_output(dumps_canonical(pipeline_to_dict(result)) + "\n", out)
    else:
        joint = result.joint
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{v}" for v in joint.margin.vars] + ["p"])
        from .tables import all_configs

        for i, cfg in enumerate(all_configs(joint.margin, joint.spec)):
            coords = [cfg.as_dict()[v] for v in joint.margin.vars]
            writer.writerow(coords + [format(float(joint.values[i]), ".17g")])
        _write_output(buf.getvalue(), out)
    sys.exit(0)


@cli.command()
@click.option("--levels", required=True, help="Comma-separated category counts, e.g. 2,2,3.")
@click.option("--margin", "margin_opt", required=True, help="Comma-separated variables, e.g. 1,2.")
@click.option(
    "--kind",
    type=click.Choice(["C", "G", "S", "SBAR"], case_sensitive=False),
    default="C",
    show_default=True,
)
@click.option(
    "--terms",
    multiple=True,
    help="Restrict to specific terms, e.g. --terms 'I={1,2};x={1,1}' (repeatable).",
)
@click.option("--out", type=str, default=None, help="Write to a file instead of stdout.")
def matrices(levels: str, margin_opt: str, kind: str, terms: tuple[str, ...], out: str | None) -> None:
    """Print one design matrix as CSV with labeled terms."""
    try:
        level_list = [int(x) for x in levels.split(",") if x.strip()]
        margin_list = [int(x) for x in margin_opt.split(",") if x.strip()]
    except ValueError:
        click.echo("error: --levels and --margin take comma-separated integers", err=True)
        sys.exit(1)
    try:
        header, rows, _ = matrix_table(level_list, margin_list, kind, list(terms) or None)
    except MllpError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [row[0]] + [format(float(v), ".17g") for v in row[1:]]
        )
    _write_output(buf.getvalue(), out)
    sys.exit(0)


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


def main(argv: list[str] | None = None) -> Any:
    return cli.main(args=argv)


if __name__ == "__main__":
    main()
