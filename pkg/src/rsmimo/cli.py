"""Command-line client for the simulator service.

The CLI is a thin client over the service layer: by default it calls the
handlers in process, with ``--server URL`` it talks to a running instance
over HTTP.  Either way the numbers are identical, floats survive the JSON
round trip exactly.

Subcommands: ``run`` (sweep a preset or a scenario file to CSV), ``verify``
(closed-form equivalence suite plus the deviations file), ``list`` (preset
catalog) and ``serve`` (start the HTTP service).  The worker count comes from
``--workers`` or the RSMIMO_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .analysis import DeviationRecord, write_deviations
from .model import ConfigurationError
from .scenarios import parse_scenario_file
from .service import (
    RunRequest,
    RunResponse,
    ScenarioSpec,
    VerifyRequest,
    VerifyResponse,
    catalog_info,
    handle_run,
    handle_verify,
)

WORKERS_ENV = "RSMIMO_WORKERS"


class ServiceClient:
    """In-process or HTTP access to the service handlers."""

    def __init__(self, server: str | None = None, transport=None):
        self.server = server
        self._transport = transport

    def _http(self):
        import httpx

        return httpx.Client(base_url=self.server, transport=self._transport, timeout=None)

    def run(self, request: RunRequest) -> RunResponse:
        if self.server is None:
            return handle_run(request)
        with self._http() as client:
            response = client.post("/run", json=request.model_dump())
            response.raise_for_status()
            return RunResponse.model_validate(response.json())

    def verify(self, request: VerifyRequest) -> VerifyResponse:
        if self.server is None:
            return handle_verify(request)
        with self._http() as client:
            response = client.post("/verify", json=request.model_dump())
            response.raise_for_status()
            return VerifyResponse.model_validate(response.json())

    def scenarios(self) -> list[dict]:
        if self.server is None:
            return [info.model_dump() for info in catalog_info()]
        with self._http() as client:
            response = client.get("/scenarios")
            response.raise_for_status()
            return response.json()


def _default_workers() -> int:
    value = os.environ.get(WORKERS_ENV)
    if value is None:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsmimo",
        description="Rate-splitting MU-MIMO downlink simulator",
    )
    parser.add_argument(
        "--server",
        default=None,
        help="base URL of a running service; default runs in process",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a sweep and write it as CSV")
    run_p.add_argument(
        "--scenario",
        required=True,
        help="preset name (see 'list') or path to a scenario file",
    )
    run_p.add_argument("--out", default=None, help="output CSV path (default stdout)")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument("--channels", type=int, default=None, help="override channel draws")
    run_p.add_argument("--errors", type=int, default=None, help="override error draws")
    run_p.add_argument("--workers", type=int, default=None, help="parallel workers")
    run_p.add_argument(
        "--timing", action="store_true",
        help="record wall time per sweep point (breaks byte-identical reruns)",
    )

    verify_p = sub.add_parser("verify", help="closed-form equivalence suite")
    verify_p.add_argument("--instances", type=int, default=1000)
    verify_p.add_argument("--seed", type=int, default=20240901)
    verify_p.add_argument(
        "--out", default="deviations.txt", help="deviations file path"
    )

    sub.add_parser("list", help="print the preset catalog")

    serve_p = sub.add_parser("serve", help="start the HTTP service")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8000)
    return parser


def _scenario_request(args) -> RunRequest:
    workers = args.workers if args.workers is not None else _default_workers()
    common = dict(
        seed=args.seed,
        n_channels=args.channels,
        n_errors=args.errors,
        workers=workers,
        timing=args.timing,
    )
    path = Path(args.scenario)
    if path.is_file():
        scenario = parse_scenario_file(path)
        return RunRequest(scenario=ScenarioSpec.from_scenario(scenario), **common)
    return RunRequest(preset=args.scenario, **common)


def _cmd_run(args, client: ServiceClient) -> int:
    from .scenarios import CSV_HEADER, emit_csv

    response = client.run(_scenario_request(args))
    result = response.to_result()
    if args.out is None:
        print(CSV_HEADER)
        for p in result.points:
            print(
                ",".join(
                    f"{v:.12e}"
                    for v in (p.sweep_value, p.esr, p.common, p.private, p.stderr, p.seconds)
                )
            )
    else:
        emit_csv(result, args.out)
        print(f"wrote {len(result.points)} sweep points to {args.out}")
    return 0


def _cmd_verify(args, client: ServiceClient) -> int:
    response = client.verify(VerifyRequest(instances=args.instances, seed=args.seed))
    for check in response.checks:
        status = "pass" if check.passed else "FAIL"
        print(
            f"[{status}] {check.name}: max residual {check.max_residual:.3e}"
            f" (tolerance {check.tolerance:.0e}, {check.instances} instances)"
        )
    records = [
        DeviationRecord(
            anchor=d.anchor,
            printed=d.printed,
            implemented=d.implemented,
            max_residual=d.max_residual,
        )
        for d in response.deviations
    ]
    write_deviations(records, args.out)
    print(f"wrote {len(records)} deviation records to {args.out}")
    print(f"suite {'passed' if response.passed else 'FAILED'} in {response.elapsed_seconds:.1f}s")
    return 0 if response.passed else 1


def _cmd_list(client: ServiceClient) -> int:
    rows = client.scenarios()
    width = max(len(r["name"]) for r in rows)
    for r in rows:
        rs = "rs" if r["rs_enabled"] else "no-rs"
        print(
            f"{r['name']:<{width}}  {r['precoder']:<5} {r['combiner']:<7} {rs:<6}"
            f" sweep={r['sweep']} csit={r['csit']}"
            f" {r['n_channels']}x{r['n_errors']}"
        )
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("rsmimo.service:app", host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    client = ServiceClient(server=args.server)
    try:
        if args.command == "run":
            return _cmd_run(args, client)
        if args.command == "verify":
            return _cmd_verify(args, client)
        if args.command == "list":
            return _cmd_list(client)
        if args.command == "serve":
            return _cmd_serve(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
