"""Command-line client for the verification service.

Subcommands mirror the service endpoints; payloads are the same pydantic
models.  By default requests are dispatched to the in-process handlers, so no
server is needed; ``--server URL`` sends them to a running instance instead.
Exit codes: 0 pass/consistent, 1 a check failed, 2 error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def _load_json(path: str) -> dict:
    return json.loads(Path(path).read_text())


def _symmetry_arg(text: str | None):
    if text is None:
        return None
    if text.startswith("rotation:"):
        return {"type": "rotation", "k": int(text.split(":", 1)[1])}
    if text.startswith("file:"):
        obj = _load_json(text.split(":", 1)[1])
        return {"type": "matrix", "k": int(obj["k"]), "matrix": obj["matrix"]}
    raise ValueError("--symmetry expects rotation:<k> or file:<path>")


def _post(server: str | None, route: str, payload: dict) -> dict:
    if server:
        import httpx

        resp = httpx.post(server.rstrip("/") + route, json=payload, timeout=3600.0)
        if resp.status_code != 200:
            raise RuntimeError(f"server returned {resp.status_code}: {resp.text}")
        return resp.json()
    # in-process dispatch through the same handlers the service uses
    from .service import app as service_app
    from .service.schemas import FindOrbitsRequest, IndexRequest, ScenarioRequest

    if route == "/verify":
        report = service_app.run_scenario_request(ScenarioRequest(**payload))
        return report.payload(with_timing=True)
    if route == "/find-orbits":
        return service_app.run_find_orbits(FindOrbitsRequest(**payload))
    if route == "/index":
        return service_app.compute_index_record(IndexRequest(**payload))
    raise ValueError(route)


def _emit(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def cmd_verify(args) -> int:
    scenario = _load_json(args.scenario)
    if args.checks:
        scenario["checks"] = args.checks.split(",")
    payload = {
        "model": scenario["model"],
        "starts": scenario.get("starts", 20),
        "seed": scenario.get("seed", 42),
        "n_fourier": scenario.get("n_fourier", 64),
        "m_max": scenario.get("m_max", 12),
        "T_max": scenario.get("T_max", 200),
        "checks": scenario.get("checks"),
    }
    result = _post(args.server, "/verify", payload)
    if args.format == "table":
        from .verify import VerificationReport

        rep = VerificationReport(
            scenario=result["scenario"], census=result["census"],
            index_data=result["index_data"], checks=result["checks"],
            timing=result.get("timing", {}), convexity=result.get("convexity"))
        text = rep.table()
        if args.out:
            Path(args.out).write_text(text + "\n")
        else:
            print(text)
    else:
        canonical = dict(result)
        canonical.pop("timing", None)
        if args.out:
            Path(args.out).write_text(
                json.dumps(canonical, sort_keys=True, separators=(",", ":")) + "\n")
        else:
            _emit(canonical, None)
    return 1 if any(c["verdict"] == "fail" for c in result["checks"]) else 0


def cmd_find_orbits(args) -> int:
    payload = {
        "model": _load_json(args.model),
        "starts": args.starts,
        "seed": args.seed,
        "n_fourier": args.n_fourier,
    }
    _emit(_post(args.server, "/find-orbits", payload), args.out)
    return 0


def cmd_index(args) -> int:
    payload = {
        "path": _load_json(args.path),
        "omega": args.omega,
        "m_max": args.m_max,
        "symmetry": _symmetry_arg(args.symmetry),
    }
    _emit(_post(args.server, "/index", payload), args.out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("sympcc.service:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sympcc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run a scenario and check every inequality")
    v.add_argument("scenario", help="scenario config JSON")
    v.add_argument("--out", help="write the report here instead of stdout")
    v.add_argument("--format", choices=("json", "table"), default="json")
    v.add_argument("--checks", help="comma-separated subset of checks")
    v.add_argument("--server", help="dispatch to a running service URL")
    v.set_defaults(fn=cmd_verify)

    f = sub.add_parser("find-orbits", help="multi-start closed characteristic census")
    f.add_argument("model", help="model config JSON")
    f.add_argument("--starts", type=int, default=20)
    f.add_argument("--seed", type=int, default=42)
    f.add_argument("--n-fourier", type=int, default=64)
    f.add_argument("--out")
    f.add_argument("--server")
    f.set_defaults(fn=cmd_find_orbits)

    i = sub.add_parser("index", help="index data of a stored symplectic path")
    i.add_argument("--path", required=True, help="path sample JSON")
    i.add_argument("--omega", default="1", help="unit-circle parameter, a+bi")
    i.add_argument("--symmetry", help="rotation:<k> or file:<path>")
    i.add_argument("--m-max", type=int, default=12)
    i.add_argument("--out")
    i.add_argument("--server")
    i.set_defaults(fn=cmd_index)

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
