"""Command line front end.

Every subcommand except ``serve`` is a client of the HTTP service. By
default the service runs in-process over an ASGI transport, so no
network or separate server is involved; ``--server URL`` points the same
client at a remote instance instead. File handling stays on the client
side: the service only ever sees lattice text, corpus text, and word
lists.

Exit codes: 0 success, 1 operational failure (bad input file, invalid
lattice, server error), 2 usage error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import shlex
import sys
from pathlib import Path
from typing import Any, Awaitable, Callable, Iterable, Sequence

import httpx

from .errors import LatticeToolError
from .formats import iter_ark_entries, read_ark_entry_text, read_scp, read_transcripts, write_ark_texts

log = logging.getLogger("latrescore")

_DEFAULT_K = 50
_CLIENT_TIMEOUT = 600.0


class CliError(Exception):
    """Operational failure that should stop the command with exit code 1."""


class ServiceClient:
    """Async JSON client; in-process unless a server URL is given."""

    def __init__(self, server: str | None) -> None:
        if server is None:
            from .service.app import create_app

            self._client = httpx.AsyncClient(
                transport=httpx.ASGITransport(app=create_app()),
                base_url="http://latrescore.local",
                timeout=_CLIENT_TIMEOUT,
            )
        else:
            self._client = httpx.AsyncClient(base_url=server, timeout=_CLIENT_TIMEOUT)

    async def __aenter__(self) -> "ServiceClient":
        return self

    async def __aexit__(self, *exc_info: object) -> None:
        await self._client.aclose()

    async def request(self, method: str, path: str, payload: dict | None = None) -> Any:
        log.debug("%s %s", method, path)
        try:
            response = await self._client.request(method, path, json=payload)
        except httpx.HTTPError as exc:
            raise CliError(f"cannot reach service: {exc}") from exc
        if response.status_code >= 400:
            raise CliError(_error_detail(response))
        if response.status_code == 204 or not response.content:
            return None
        return response.json()

    async def post(self, path: str, payload: dict) -> Any:
        return await self.request("POST", path, payload)

    async def get(self, path: str) -> Any:
        return await self.request("GET", path)


def _error_detail(response: httpx.Response) -> str:
    try:
        body = response.json()
    except ValueError:
        return f"HTTP {response.status_code}: {response.text.strip()[:200]}"
    if isinstance(body, dict) and "detail" in body:
        detail = body["detail"]
        if isinstance(detail, str):
            return detail
        return json.dumps(detail)
    return f"HTTP {response.status_code}"


# -- input plumbing ---------------------------------------------------------


def _load_inputs(paths: Sequence[str]) -> list[tuple[str, str]]:
    """(key, lattice_text) pairs from text, .ark, and .scp files, in order."""
    entries: list[tuple[str, str]] = []
    for raw in paths:
        path = Path(raw)
        if not path.exists():
            raise CliError(f"no such file: {raw}")
        suffix = path.suffix.lower()
        if suffix == ".ark":
            entries.extend(iter_ark_entries(path))
        elif suffix == ".scp":
            index = read_scp(path)
            for key in index.keys():
                entries.append((key, read_ark_entry_text(index, key)))
        else:
            text = path.read_text(encoding="utf-8")
            stripped = text.strip()
            if not stripped:
                raise CliError(f"empty lattice file: {raw}")
            key = stripped.split("\n", 1)[0].split()[0]
            entries.append((key, text))
    return entries


def _multi_output(entries: Iterable[tuple[str, str]], args: argparse.Namespace) -> None:
    """Write transformed lattices: ark for many, text file or stdout for one."""
    items = list(entries)
    out = getattr(args, "output", None)
    if out is None:
        if len(items) > 1:
            raise CliError("multiple lattices need -o OUT.ark")
        sys.stdout.write(items[0][1])
        return
    if len(items) > 1 or out.endswith(".ark"):
        write_ark_texts(out, items, scp_path=getattr(args, "scp", None))
    else:
        text = items[0][1]
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


async def _gather_limited(jobs: int, tasks: Sequence[Callable[[], Awaitable[Any]]]) -> list[Any]:
    semaphore = asyncio.Semaphore(max(1, jobs))

    async def run(task: Callable[[], Awaitable[Any]]) -> Any:
        async with semaphore:
            return await task()

    return list(await asyncio.gather(*(run(task) for task in tasks)))


def _config_payload(args: argparse.Namespace) -> dict:
    return {
        "lm_scale": args.lm_scale,
        "wip": args.wip,
        "lm_interp": args.lm_interp,
    }


async def _upload_model(client: ServiceClient, model_path: str) -> str:
    path = Path(model_path)
    if not path.exists():
        raise CliError(f"no such model file: {model_path}")
    info = await client.post("/lm/upload", {"model_text": path.read_text(encoding="utf-8")})
    return info["model_id"]


# -- subcommands ------------------------------------------------------------


async def _cmd_validate(args: argparse.Namespace) -> int:
    entries = _load_inputs(args.lattices)
    async with ServiceClient(args.server) as client:
        results = await _gather_limited(
            args.jobs,
            [
                (lambda text=text: client.post("/lattice/validate", {"lattice_text": text}))
                for _key, text in entries
            ],
        )
    failures = 0
    for (key, _text), result in zip(entries, results):
        if result["ok"]:
            print(f"{key} OK")
        else:
            failures += 1
            print(f"{key} INVALID")
            for violation in result["violations"]:
                print(f"  {violation}")
    return 1 if failures else 0


async def _cmd_best_path(args: argparse.Namespace) -> int:
    entries = _load_inputs(args.lattices)
    payload_cfg = _config_payload(args)
    async with ServiceClient(args.server) as client:
        results = await _gather_limited(
            args.jobs,
            [
                (
                    lambda text=text: client.post(
                        "/lattice/best-path",
                        {"lattice_text": text, "config": payload_cfg},
                    )
                )
                for _key, text in entries
            ],
        )
    for (key, _text), result in zip(entries, results):
        words = " ".join(result["words"])
        if args.with_score:
            print(f"{key}\t{result['combined']:.6f}\t{words}".rstrip())
        else:
            print(f"{key} {words}".rstrip())
    return 0


async def _cmd_nbest(args: argparse.Namespace) -> int:
    entries = _load_inputs(args.lattices)
    payload_cfg = _config_payload(args)
    async with ServiceClient(args.server) as client:
        results = await _gather_limited(
            args.jobs,
            [
                (
                    lambda text=text: client.post(
                        "/lattice/nbest",
                        {
                            "lattice_text": text,
                            "k": args.k,
                            "unique_words": args.unique_words,
                            "config": payload_cfg,
                        },
                    )
                )
                for _key, text in entries
            ],
        )
    for (key, _text), result in zip(entries, results):
        for rank, path in enumerate(result["paths"], start=1):
            words = " ".join(path["words"])
            if args.with_score:
                print(f"{key}-{rank}\t{path['combined']:.6f}\t{words}".rstrip())
            else:
                print(f"{key}-{rank} {words}".rstrip())
    return 0


async def _cmd_expand(args: argparse.Namespace) -> int:
    entries = _load_inputs(args.lattices)
    async with ServiceClient(args.server) as client:
        results = await _gather_limited(
            args.jobs,
            [
                (
                    lambda text=text: client.post(
                        "/lattice/expand", {"lattice_text": text, "order": args.order}
                    )
                )
                for _key, text in entries
            ],
        )
    _multi_output(
        ((key, result["lattice_text"]) for (key, _), result in zip(entries, results)), args
    )
    return 0


async def _cmd_prune(args: argparse.Namespace) -> int:
    entries = _load_inputs(args.lattices)
    payload_cfg = _config_payload(args)
    async with ServiceClient(args.server) as client:
        results = await _gather_limited(
            args.jobs,
            [
                (
                    lambda text=text: client.post(
                        "/lattice/prune",
                        {"lattice_text": text, "beam": args.beam, "config": payload_cfg},
                    )
                )
                for _key, text in entries
            ],
        )
    _multi_output(
        ((key, result["lattice_text"]) for (key, _), result in zip(entries, results)), args
    )
    return 0


async def _cmd_dot(args: argparse.Namespace) -> int:
    entries = _load_inputs([args.lattice])
    async with ServiceClient(args.server) as client:
        result = await client.post("/lattice/dot", {"lattice_text": entries[0][1]})
    if args.output:
        Path(args.output).write_text(result["dot"], encoding="utf-8")
    else:
        sys.stdout.write(result["dot"])
    return 0


async def _cmd_train_lm(args: argparse.Namespace) -> int:
    corpus_path = Path(args.corpus)
    if not corpus_path.exists():
        raise CliError(f"no such file: {args.corpus}")
    async with ServiceClient(args.server) as client:
        info = await client.post(
            "/lm/train",
            {
                "corpus_text": corpus_path.read_text(encoding="utf-8"),
                "order": args.order,
                "min_count": args.min_count,
            },
        )
        download = await client.get(f"/lm/{info['model_id']}")
    Path(args.output).write_text(download["model_text"], encoding="utf-8")
    print(f"{info['model_id']} order={info['order']} vocab={info['vocab_size']} -> {args.output}")
    return 0


async def _cmd_rescore(args: argparse.Namespace) -> int:
    entries = _load_inputs(args.lattices)
    payload_cfg = _config_payload(args)
    async with ServiceClient(args.server) as client:
        model_id = await _upload_model(client, args.model)
        results = await _gather_limited(
            args.jobs,
            [
                (
                    lambda text=text: client.post(
                        "/rescore/lattice",
                        {"lattice_text": text, "model_id": model_id, "config": payload_cfg},
                    )
                )
                for _key, text in entries
            ],
        )
    _multi_output(
        ((key, result["lattice_text"]) for (key, _), result in zip(entries, results)), args
    )
    return 0


async def _cmd_rescore_nbest(args: argparse.Namespace) -> int:
    if (args.model is None) == (args.scorer_cmd is None):
        raise CliError("exactly one of --model or --scorer-cmd is required")
    entries = _load_inputs(args.lattices)
    payload_cfg = _config_payload(args)
    async with ServiceClient(args.server) as client:
        scorer_id: str | None = None
        payload_base: dict = {
            "k": args.k,
            "unique_words": args.unique_words,
            "config": payload_cfg,
        }
        try:
            if args.model is not None:
                payload_base["model_id"] = await _upload_model(client, args.model)
            else:
                info = await client.post(
                    "/scorer/register", {"command": shlex.split(args.scorer_cmd)}
                )
                scorer_id = info["scorer_id"]
                payload_base["scorer_id"] = scorer_id
            # An external scorer is one stdio process; keep its requests serial.
            jobs = args.jobs if scorer_id is None else 1
            results = await _gather_limited(
                jobs,
                [
                    (
                        lambda text=text: client.post(
                            "/rescore/nbest", dict(payload_base, lattice_text=text)
                        )
                    )
                    for _key, text in entries
                ],
            )
        finally:
            if scorer_id is not None:
                await client.request("DELETE", f"/scorer/{scorer_id}")
    for (key, _text), result in zip(entries, results):
        for hyp in result["hypotheses"]:
            words = " ".join(hyp["words"])
            line = (
                f"{key}-{hyp['rank_after']}\t{hyp['combined']:.6f}"
                f"\t{hyp['rank_before']}->{hyp['rank_after']}\t{words}"
            )
            print(line.rstrip())
    return 0


async def _cmd_wer(args: argparse.Namespace) -> int:
    refs = read_transcripts(args.refs)
    hyps = read_transcripts(args.hyps)
    async with ServiceClient(args.server) as client:
        result = await client.post("/eval/wer", {"refs": refs, "hyps": hyps})
    if args.json:
        print(json.dumps(result, sort_keys=True))
    else:
        print(f"WER {result['wer_percent']:.2f}")
    return 0


async def _cmd_sweep(args: argparse.Namespace) -> int:
    entries = _load_inputs(args.lattices)
    lattices = dict(entries)
    if len(lattices) != len(entries):
        raise CliError("duplicate utterance keys across sweep inputs")
    refs = read_transcripts(args.refs)
    scales = _parse_floats(args.scales, "scales")
    wips = _parse_floats(args.wips, "wips")
    async with ServiceClient(args.server) as client:
        payload: dict = {
            "lattices": lattices,
            "refs": refs,
            "scales": scales,
            "wips": wips,
            "test_set": args.test_set,
            "include_baseline": not args.no_baseline,
            "nbest_k": args.k,
            "lm_interp": args.lm_interp,
        }
        if args.model is not None:
            payload["model_id"] = await _upload_model(client, args.model)
        result = await client.post("/eval/sweep", payload)
    if args.csv:
        Path(args.csv).write_text(result["csv"], encoding="utf-8")
    if args.table:
        sys.stdout.write(result["table"])
    elif not args.csv:
        sys.stdout.write(result["csv"])
    return 0


def _parse_floats(raw: str, name: str) -> list[float]:
    try:
        values = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise CliError(f"bad --{name} value: {raw!r}") from None
    if not values:
        raise CliError(f"--{name} needs at least one number")
    return values


async def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import app

    config = uvicorn.Config(app, host=args.host, port=args.port, log_level="info")
    await uvicorn.Server(config).serve()
    return 0


# -- parser -----------------------------------------------------------------


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lm-scale", type=float, default=7.0, help="LM weight (default 7.0)")
    parser.add_argument("--wip", type=float, default=0.5, help="word insertion penalty (default 0.5)")
    parser.add_argument(
        "--lm-interp",
        type=float,
        default=1.0,
        help="weight on the replacement LM in [0, 1] (default 1.0)",
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--server", default=None, help="remote service URL (default: in-process)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel requests (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latrescore",
        description="Lattice rescoring toolkit: decode, rescore, and score lattices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check lattice structure")
    p.add_argument("lattices", nargs="+", help="lattice text, .ark, or .scp files")
    _add_common(p)
    p.set_defaults(handler=_cmd_validate)

    p = sub.add_parser("best-path", help="decode the single best transcript")
    p.add_argument("lattices", nargs="+")
    p.add_argument("--with-score", action="store_true", help="include the combined score")
    _add_config_options(p)
    _add_common(p)
    p.set_defaults(handler=_cmd_best_path)

    p = sub.add_parser("nbest", help="decode the k best paths")
    p.add_argument("lattices", nargs="+")
    p.add_argument("-k", type=int, default=_DEFAULT_K, help=f"list size (default {_DEFAULT_K})")
    p.add_argument("--unique-words", action="store_true", help="drop duplicate word sequences")
    p.add_argument("--with-score", action="store_true", help="include the combined score")
    _add_config_options(p)
    _add_common(p)
    p.set_defaults(handler=_cmd_nbest)

    p = sub.add_parser("expand", help="expand lattice state for an n-gram order")
    p.add_argument("lattices", nargs="+")
    p.add_argument("--order", type=int, required=True, help="n-gram order")
    p.add_argument("-o", "--output", default=None, help="output file (.ark for many)")
    p.add_argument("--scp", default=None, help="also write an scp index for ark output")
    _add_common(p)
    p.set_defaults(handler=_cmd_expand)

    p = sub.add_parser("prune", help="drop arcs outside a score beam")
    p.add_argument("lattices", nargs="+")
    p.add_argument("--beam", type=float, required=True, help="beam width (combined score)")
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--scp", default=None)
    _add_config_options(p)
    _add_common(p)
    p.set_defaults(handler=_cmd_prune)

    p = sub.add_parser("dot", help="render a lattice as Graphviz dot")
    p.add_argument("lattice")
    p.add_argument("-o", "--output", default=None)
    _add_common(p)
    p.set_defaults(handler=_cmd_dot)

    p = sub.add_parser("train-lm", help="train an n-gram model from a text corpus")
    p.add_argument("corpus", help="one sentence per line")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--min-count", type=int, default=1, help="vocabulary count threshold")
    p.add_argument("-o", "--output", required=True, help="model file to write")
    _add_common(p)
    p.set_defaults(handler=_cmd_train_lm)

    p = sub.add_parser("rescore", help="replace lattice LM scores with a trained model")
    p.add_argument("lattices", nargs="+")
    p.add_argument("--model", required=True, help="model file from train-lm")
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--scp", default=None)
    _add_config_options(p)
    _add_common(p)
    p.set_defaults(handler=_cmd_rescore)

    p = sub.add_parser("rescore-nbest", help="rescore the k best paths with a model or scorer")
    p.add_argument("lattices", nargs="+")
    p.add_argument("--model", default=None, help="model file from train-lm")
    p.add_argument(
        "--scorer-cmd", default=None, help="external scorer command, e.g. 'node serve.js ckpt'"
    )
    p.add_argument("-k", type=int, default=_DEFAULT_K)
    p.add_argument("--unique-words", action="store_true")
    _add_config_options(p)
    _add_common(p)
    p.set_defaults(handler=_cmd_rescore_nbest)

    p = sub.add_parser("wer", help="word error rate of hypotheses against references")
    p.add_argument("hyps", help="hypothesis transcripts: key w1 w2 ...")
    p.add_argument("--refs", required=True, help="reference transcripts")
    p.add_argument("--json", action="store_true", help="print the full breakdown as JSON")
    _add_common(p)
    p.set_defaults(handler=_cmd_wer)

    p = sub.add_parser("sweep", help="WER over an (lm_scale x wip) grid")
    p.add_argument("lattices", nargs="+")
    p.add_argument("--refs", required=True)
    p.add_argument("--model", default=None, help="rescore with this model (omit for raw decode)")
    p.add_argument("--scales", required=True, help="comma-separated lm_scale values")
    p.add_argument("--wips", required=True, help="comma-separated wip values")
    p.add_argument("--lm-interp", type=float, default=1.0)
    p.add_argument("-k", type=int, default=_DEFAULT_K, help="n-best size for unbounded scorers")
    p.add_argument("--test-set", default="test")
    p.add_argument("--no-baseline", action="store_true", help="skip baseline decodes")
    p.add_argument("--csv", default=None, help="write CSV here instead of stdout")
    p.add_argument("--table", action="store_true", help="print an aligned table")
    _add_common(p)
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=_cmd_serve)

    return parser


def _configure_logging() -> None:
    level_name = os.environ.get("LATRESCORE_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return asyncio.run(args.handler(args))
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except LatticeToolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
