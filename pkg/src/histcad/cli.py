"""Batch command-line surface: ``histcad <verb> [flags] <inputs...>``.

The CLI is a thin client of the service. Without ``--server`` it calls the
same typed handlers in-process; with ``--server URL`` every request goes
over HTTP to a running instance (see ``histcad serve``). Outputs are keyed
by input filename and assembled in sorted order, so results are
byte-identical regardless of ``--jobs``. One file's failure never aborts
the batch; exit codes: 0 clean, 1 per-file failures, 2 usage error.

Logs go to standard error as ``key=value`` lines; data goes to files or
standard output only.
"""

from __future__ import annotations

import base64
import glob
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional

import click
import httpx

from . import schemas as S
from .errors import HistcadError
from .service import (ServiceSettings, create_app, handle_analyze,
                      handle_annotate, handle_edit, handle_eval,
                      handle_execute, handle_flatten, handle_nlt,
                      handle_prompt, handle_validate)

CLI_DEFAULT_GRID = 128  # service default is 256; the batch default trades accuracy for speed


class Client:
    """Dispatches requests either in-process or to a remote server."""

    def __init__(self, server: Optional[str], settings: ServiceSettings):
        self.settings = settings
        self._http = httpx.Client(base_url=server, timeout=600.0) if server else None

    def _call(self, path: str, req, resp_cls, local: Callable):
        if self._http is None:
            return local()
        r = self._http.post(path, json=req.model_dump())
        if r.status_code != 200:
            try:
                body = r.json()
                raise HistcadError(f"{body.get('code', 'ERROR')}: {body.get('message', r.text)}")
            except ValueError:
                raise HistcadError(f"server returned HTTP {r.status_code}") from None
        return resp_cls.model_validate(r.json())

    def validate(self, req: S.ValidateRequest) -> S.ValidateResponse:
        return self._call("/v1/validate", req, S.ValidateResponse, lambda: handle_validate(req))

    def flatten(self, req: S.FlattenRequest) -> S.FlattenResponse:
        return self._call("/v1/flatten", req, S.FlattenResponse, lambda: handle_flatten(req))

    def analyze(self, req: S.AnalyzeRequest) -> S.AnalyzeResponse:
        return self._call("/v1/analyze", req, S.AnalyzeResponse, lambda: handle_analyze(req))

    def execute(self, req: S.ExecuteRequest) -> S.ExecuteResponse:
        return self._call("/v1/execute", req, S.ExecuteResponse,
                          lambda: handle_execute(req, self.settings))

    def edit(self, req: S.EditRequest) -> S.EditResponse:
        return self._call("/v1/edit", req, S.EditResponse,
                          lambda: handle_edit(req, self.settings))

    def nlt(self, req: S.NltRequest) -> S.NltResponse:
        return self._call("/v1/nlt", req, S.NltResponse, lambda: handle_nlt(req))

    def prompt(self, req: S.PromptRequest) -> S.PromptResponse:
        return self._call("/v1/prompt", req, S.PromptResponse, lambda: handle_prompt(req))

    def annotate(self, req: S.AnnotateRequest) -> S.AnnotateResponse:
        return self._call("/v1/annotate", req, S.AnnotateResponse,
                          lambda: handle_annotate(req, self.settings))

    def evaluate(self, req: S.EvalRequest) -> S.EvalResponse:
        return self._call("/v1/eval", req, S.EvalResponse,
                          lambda: handle_eval(req, self.settings))


def _load_settings(config: Optional[str]) -> ServiceSettings:
    settings = ServiceSettings()
    if config:
        data = json.loads(Path(config).read_text("utf-8"))
        settings.endpoint = data.get("endpoint", settings.endpoint)
        settings.model = data.get("model", settings.model)
        settings.grid = data.get("grid", settings.grid)
    return settings


def _expand_inputs(inputs: tuple[str, ...]) -> list[Path]:
    paths: list[Path] = []
    for item in inputs:
        if glob.has_magic(item):
            paths.extend(Path(p) for p in sorted(glob.glob(item)))
        else:
            paths.append(Path(item))
    paths = sorted(set(paths))
    if not paths:
        raise click.UsageError("NO_INPUTS: no files matched")
    missing = [p for p in paths if not p.is_file()]
    if missing:
        raise click.UsageError(f"NO_INPUTS: not a file: {missing[0]}")
    return paths


def _log(**kv) -> None:
    sys.stderr.write(" ".join(f"{k}={v}" for k, v in kv.items()) + "\n")


def _run_batch(paths: list[Path], jobs: int, worker: Callable[[Path], tuple[bool, str]]
               ) -> list[tuple[Path, bool, str]]:
    """Per-file isolation; results returned (and logged) in sorted path order."""

    def safe(path: Path) -> tuple[Path, bool, str]:
        try:
            ok, message = worker(path)
            return path, ok, message
        except HistcadError as e:
            return path, False, f"{e.code}: {e}"
        except Exception as e:  # noqa: BLE001 - isolation boundary
            return path, False, f"ERROR: {e}"

    if jobs <= 1:
        results = [safe(p) for p in paths]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(safe, paths))
    results.sort(key=lambda r: str(r[0]))
    return results


def _out_path(out: str, source: Path, suffix: str) -> Path:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / (source.stem + suffix)


@click.group()
@click.option("--server", default=None, metavar="URL", help="Remote service URL; default runs in-process.")
@click.option("--config", default=None, type=click.Path(exists=True, dir_okay=False),
              help="JSON config file with endpoint/model/grid defaults.")
@click.pass_context
def main(ctx, server, config):
    """Constraint-aware CAD sequence toolkit."""
    ctx.obj = Client(server, _load_settings(config))


@main.command()
@click.option("--strict", is_flag=True, help="Reject unknown fields instead of warning.")
@click.option("--jobs", default=1, type=click.IntRange(min=1), help="Parallel workers.")
@click.argument("inputs", nargs=-1, required=True)
@click.pass_obj
def validate(client: Client, strict, jobs, inputs):
    """Check document invariants; nonzero exit on any violation."""
    paths = _expand_inputs(inputs)

    def worker(path: Path):
        resp = client.validate(S.ValidateRequest(document=path.read_text("utf-8"), strict=strict))
        if resp.valid:
            return True, "ok"
        detail = "; ".join(f"{v.code} at {v.path}" for v in resp.violations)
        return False, detail

    results = _run_batch(paths, jobs, worker)
    invalid = 0
    for path, ok, message in results:
        _log(cmd="validate", file=path, status="ok" if ok else "invalid", detail=message)
        if not ok:
            invalid += 1
    click.echo(f"{len(results)} files, {invalid} invalid")
    if invalid:
        sys.exit(1)


@main.command()
@click.option("--out", default=".", help="Output directory for .hcad files.")
@click.option("--strict", is_flag=True)
@click.option("--jobs", default=1, type=click.IntRange(min=1))
@click.argument("inputs", nargs=-1, required=True)
@click.pass_obj
def flatten(client: Client, out, strict, jobs, inputs):
    """Flatten hierarchical .hier sketches into flat .hcad documents."""
    paths = _expand_inputs(inputs)

    def worker(path: Path):
        resp = client.flatten(S.FlattenRequest(hier=path.read_text("utf-8"), strict=strict))
        _out_path(out, path, ".hcad").write_text(resp.document, encoding="utf-8")
        note = f"pruned={len(resp.prune_log)}"
        return True, note

    results = _run_batch(paths, jobs, worker)
    failed = _summarize(results, "flatten")
    if failed:
        sys.exit(1)


@main.command()
@click.option("--out", default=".", help="Output directory for .analysis.json files.")
@click.option("--strict", is_flag=True)
@click.option("--jobs", default=1, type=click.IntRange(min=1))
@click.argument("inputs", nargs=-1, required=True)
@click.pass_obj
def analyze(client: Client, out, strict, jobs, inputs):
    """Emit loop/OBB/relation dumps for each document."""
    paths = _expand_inputs(inputs)

    def worker(path: Path):
        resp = client.analyze(S.AnalyzeRequest(document=path.read_text("utf-8"), strict=strict))
        text = json.dumps(resp.analysis, indent=2, sort_keys=True) + "\n"
        _out_path(out, path, ".analysis.json").write_text(text, encoding="utf-8")
        return True, "ok"

    results = _run_batch(paths, jobs, worker)
    if _summarize(results, "analyze"):
        sys.exit(1)


@main.command(name="exec")
@click.option("--out", default=".", help="Output directory for STL/XYZ files.")
@click.option("--grid", default=CLI_DEFAULT_GRID, type=click.IntRange(min=8),
              help="Boolean field resolution (cells along the longest axis).")
@click.option("--samples", default=2000, type=click.IntRange(min=1))
@click.option("--strict", is_flag=True)
@click.option("--jobs", default=1, type=click.IntRange(min=1))
@click.argument("inputs", nargs=-1, required=True)
@click.pass_obj
def exec_cmd(client: Client, out, grid, samples, strict, jobs, inputs):
    """Execute documents to STL meshes and XYZ surface samples."""
    paths = _expand_inputs(inputs)
    statuses: dict[str, dict] = {}

    def worker(path: Path):
        resp = client.execute(S.ExecuteRequest(
            document=path.read_text("utf-8"), strict=strict, grid=grid,
            samples=samples, include_mesh=True, include_points=True))
        statuses[str(path)] = {"ok": resp.ok, "failed_part": resp.failed_part,
                               "error_code": resp.error_code, "volume": resp.volume}
        if not resp.ok:
            return False, f"{resp.error_code}: {resp.message}"
        _out_path(out, path, ".stl").write_bytes(base64.b64decode(resp.stl_base64))
        _out_path(out, path, ".xyz").write_text(resp.points_xyz, encoding="utf-8")
        return True, f"volume={resp.volume:.6g}"

    results = _run_batch(paths, jobs, worker)
    failed = _summarize(results, "exec")
    status_text = json.dumps({k: statuses[k] for k in sorted(statuses)}, indent=2,
                             sort_keys=True) + "\n"
    (Path(out) / "exec_status.json").write_text(status_text, encoding="utf-8")
    ir = failed / len(results) if results else 0.0
    click.echo(f"{len(results)} files, {failed} failed, IR={ir:.2f}")
    if failed:
        sys.exit(1)


@main.command()
@click.option("--pins", "pins_file", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSON pin specification: {\"pins\": [{\"var\": path, \"value\": v}, ...]}.")
@click.option("--out", default=".", help="Output directory for the solved document.")
@click.option("--part", default=0, type=int, help="Part index to edit.")
@click.option("--tol", default=1e-6, type=float, help="Satisfaction check tolerance.")
@click.option("--strict", is_flag=True)
@click.argument("input_file", nargs=1)
@click.pass_obj
def edit(client: Client, pins_file, out, part, tol, strict, input_file):
    """Solve constraints under pinned parameter edits."""
    path = Path(input_file)
    if not path.is_file():
        raise click.UsageError(f"NO_INPUTS: not a file: {path}")
    spec = json.loads(Path(pins_file).read_text("utf-8"))
    pins = {entry["var"]: float(entry["value"]) for entry in spec.get("pins", [])}
    resp = client.edit(S.EditRequest(document=path.read_text("utf-8"), pins=pins,
                                     part=part, tol=tol, strict=strict))
    _out_path(out, path, ".solved.hcad").write_text(resp.document, encoding="utf-8")
    _log(cmd="edit", file=path, converged=resp.converged, iterations=resp.iterations,
         max_residual=f"{resp.max_residual:.3e}", all_satisfied=resp.all_satisfied)
    click.echo(json.dumps({"converged": resp.converged, "iterations": resp.iterations,
                           "max_residual": resp.max_residual,
                           "all_satisfied": resp.all_satisfied}))
    if not resp.converged:
        sys.exit(1)


@main.command()
@click.option("--out", default=".", help="Output directory for .nlt.txt files.")
@click.option("--strict", is_flag=True)
@click.option("--jobs", default=1, type=click.IntRange(min=1))
@click.argument("inputs", nargs=-1, required=True)
@click.pass_obj
def nlt(client: Client, out, strict, jobs, inputs):
    """Write deterministic natural-language transcriptions."""
    paths = _expand_inputs(inputs)

    def worker(path: Path):
        resp = client.nlt(S.NltRequest(document=path.read_text("utf-8"), strict=strict))
        _out_path(out, path, ".nlt.txt").write_text(resp.nlt, encoding="utf-8")
        return True, "ok"

    results = _run_batch(paths, jobs, worker)
    if _summarize(results, "nlt"):
        sys.exit(1)


@main.command()
@click.option("--task", type=click.Choice(["process", "structure", "function"]), required=True)
@click.option("--endpoint", default=None, help="Chat endpoint URL (overrides config).")
@click.option("--model", default=None, help="Model name sent to the endpoint.")
@click.option("--log", "log_file", default="annotations.jsonl",
              help="Append-only JSONL annotation log (request-hash deduplicated).")
@click.option("--strict", is_flag=True)
@click.option("--jobs", default=1, type=click.IntRange(min=1))
@click.argument("inputs", nargs=-1, required=True)
@click.pass_obj
def annotate(client: Client, task, endpoint, model, log_file, strict, jobs, inputs):
    """Request LLM annotations for documents (requires a chat endpoint)."""
    paths = _expand_inputs(inputs)
    log_path = Path(log_file)
    seen: set[str] = set()
    if log_path.exists():
        for line in log_path.read_text("utf-8").splitlines():
            try:
                seen.add(json.loads(line)["request_hash"])
            except (ValueError, KeyError):
                continue

    records: dict[str, dict] = {}

    def worker(path: Path):
        resp = client.annotate(S.AnnotateRequest(
            document=path.read_text("utf-8"), task=task, strict=strict,
            endpoint=endpoint, model=model))
        records[str(path)] = {"file": str(path), **resp.model_dump()}
        return True, f"hash={resp.request_hash[:12]}"

    results = _run_batch(paths, jobs, worker)
    with log_path.open("a", encoding="utf-8") as fh:
        for key in sorted(records):
            rec = records[key]
            if rec["request_hash"] in seen:
                continue
            seen.add(rec["request_hash"])
            fh.write(json.dumps(rec) + "\n")
    if _summarize(results, "annotate"):
        sys.exit(1)


@main.command(name="eval")
@click.option("--references", "references_dir", default=None, type=click.Path(file_okay=False),
              help="Directory of <stem>.xyz reference point clouds.")
@click.option("--grid", default=CLI_DEFAULT_GRID, type=click.IntRange(min=8))
@click.option("--samples", default=2000, type=click.IntRange(min=1))
@click.option("--strict", is_flag=True)
@click.argument("inputs", nargs=-1, required=True)
@click.pass_obj
def eval_cmd(client: Client, references_dir, grid, samples, strict, inputs):
    """Batch metrics: invalidity ratio and Chamfer distances vs references."""
    paths = _expand_inputs(inputs)
    documents = [p.read_text("utf-8") for p in paths]
    references = None
    if references_dir:
        references = []
        for p in paths:
            ref = Path(references_dir) / (p.stem + ".xyz")
            references.append(ref.read_text("utf-8") if ref.is_file() else None)
    resp = client.evaluate(S.EvalRequest(documents=documents, references=references,
                                         strict=strict, grid=grid, samples=samples))
    click.echo(json.dumps(resp.model_dump(), indent=2, sort_keys=True))
    _log(cmd="eval", files=len(paths), failures=resp.failures,
         ir=f"{resp.invalidity_ratio:.2f}")
    if resp.failures:
        sys.exit(1)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
@click.pass_obj
def serve(client: Client, host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run(create_app(client.settings), host=host, port=port)


def _summarize(results: list[tuple[Path, bool, str]], cmd: str) -> int:
    failed = 0
    for path, ok, message in results:
        _log(cmd=cmd, file=path, status="ok" if ok else "failed", detail=message)
        if not ok:
            failed += 1
    return failed


if __name__ == "__main__":
    main()
