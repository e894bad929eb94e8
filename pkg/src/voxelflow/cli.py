"""Command-line front door.

A thin client over the service endpoints: each command builds a request,
posts it (in process by default, or to ``--server URL``), and renders the
response.  Exit codes: 0 success, 1 domain finding (inspection flagged an
inconsistency), 2 unusable input (parse/lookup failures), 3 a pipeline
references a model that is not attached.
"""

from __future__ import annotations

import argparse
import sys


def _post(server, route, payload):
    if server:
        import httpx

        response = httpx.post(server.rstrip("/") + route, json=payload, timeout=600.0)
    else:
        from fastapi.testclient import TestClient

        from .service.app import create_app

        with TestClient(create_app()) as client:
            response = client.post(route, json=payload)
    return response


def _call(args, route, payload):
    """Post and handle the error statuses; returns the decoded body."""
    response = _post(args.server, route, payload)
    if response.status_code == 200:
        return response.json()
    detail = ""
    try:
        detail = response.json().get("detail", "")
    except Exception:
        detail = response.text
    print(f"error: {detail}", file=sys.stderr)
    if response.status_code == 424:
        raise SystemExit(3)
    raise SystemExit(2)


def cmd_inspect(args) -> int:
    body = _call(
        args,
        "/catalog/inspect",
        {"catalog_path": args.catalog, "modalities": args.modalities, "ns": args.ns},
    )
    print(body["text"])
    return 0 if body["consistent"] else 1


def cmd_stats(args) -> int:
    body = _call(
        args,
        "/catalog/stats",
        {"catalog_path": args.catalog, "modality": args.modality, "n": args.n},
    )
    print(f"{body['mean']:.10g} {body['std']:.10g}")
    return 0


def cmd_run(args) -> int:
    body = _call(
        args,
        "/pipeline/run",
        {
            "pipeline_path": args.pipeline,
            "catalog_path": args.catalog,
            "identifier": args.identifier,
            "output_set": args.set,
            "out_dir": args.out,
            "seed": args.seed,
        },
    )
    print(body["steps"])
    return 0


def cmd_summary(args) -> int:
    body = _call(args, "/pipeline/summary", {"pipeline_path": args.pipeline})
    print(body["summary"])
    return 0


def cmd_netshape(args) -> int:
    payload = {"arch_path": args.arch, "size_range": list(args.range)}
    if args.input_size is not None:
        payload["input_size"] = args.input_size
    body = _call(args, "/netshape", payload)
    rf = body["receptive_field"]
    print(f"receptive field: {rf[0]} {rf[1]} {rf[2]}")
    if body["output_size"] is not None:
        out = body["output_size"]
        ins = args.input_size
        print(f"output size for input {ins[0]} {ins[1]} {ins[2]}: {out[0]} {out[1]} {out[2]}")
    print(f"admissible cubic sizes in [{args.range[0]}, {args.range[1]}]:")
    for input_size, output in body["admissible"]:
        print(f"  {input_size[0]} -> {output[0]}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("voxelflow.service.app:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxelflow",
        description="Spatially-aware dataflow pipelines for volumetric images.",
    )
    parser.add_argument(
        "--server",
        default=None,
        help="base URL of a running voxelflow service; default runs in process",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("inspect", help="check modalities for spatial consistency")
    p.add_argument("catalog")
    p.add_argument("--modalities", nargs="+", required=True)
    p.add_argument("--ns", nargs="+", type=int, default=None,
                   help="limit to the first N records per modality")
    p.set_defaults(func=cmd_inspect)

    p = commands.add_parser("stats", help="mean and std of a modality's voxels")
    p.add_argument("catalog")
    p.add_argument("--modality", required=True)
    p.add_argument("--n", type=int, default=None)
    p.set_defaults(func=cmd_stats)

    p = commands.add_parser("run", help="evaluate a named output set for one identifier")
    p.add_argument("pipeline")
    p.add_argument("catalog")
    p.add_argument("--identifier", required=True, help="dataset_id/case_id/record_id")
    p.add_argument("--set", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = commands.add_parser("summary", help="print the transformer graph")
    p.add_argument("pipeline")
    p.set_defaults(func=cmd_summary)

    p = commands.add_parser("netshape", help="receptive field and size arithmetic")
    p.add_argument("arch")
    p.add_argument("--input-size", nargs=3, type=int, default=None)
    p.add_argument("--range", nargs=2, type=int, default=(1, 128))
    p.set_defaults(func=cmd_netshape)

    p = commands.add_parser("serve", help="host the service with uvicorn")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2


if __name__ == "__main__":
    sys.exit(main())
