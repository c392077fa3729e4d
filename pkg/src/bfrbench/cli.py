"""Command-line entry point: a thin client of the benchmark service.

Every subcommand builds a request, sends it through the service layer (an
in-process app by default, or a remote instance via --server / the
BFRBENCH_SERVER environment variable) and maps the HTTP status to the exit
code convention: 0 success, 1 runtime/partial failure, 2 invalid arguments.
"""

from __future__ import annotations

import json
import sys

import click

from . import __version__

SETTINGS = ("blur", "noise", "jpeg", "lr", "full")
METRICS = ("psnr", "ssim", "ms_ssim", "niqe", "afld", "afics")


class ServiceClient:
    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app(),
                                      raise_server_exceptions=False)

    def post(self, path: str, payload: dict):
        return self._client.post(path, json=payload)

    def get(self, path: str):
        return self._client.get(path)

    def close(self) -> None:
        self._client.close()


def _dispatch(server: str | None, path: str, payload: dict):
    """POST and translate the response into (exit_code, body)."""
    client = ServiceClient(server)
    try:
        response = client.post(path, json_safe(payload))
    finally:
        client.close()
    if response.status_code == 200:
        return 0, response.json()
    try:
        detail = response.json().get("detail")
    except ValueError:
        detail = response.text
    click.echo(f"error: {detail}", err=True)
    return (2 if response.status_code == 422 else 1), None


def json_safe(payload: dict) -> dict:
    return {k: v for k, v in payload.items() if v is not None}


@click.group()
@click.version_option(version=__version__)
@click.option("--server", envvar="BFRBENCH_SERVER", default=None,
              help="Remote service URL; default runs the service in-process.")
@click.pass_context
def main(ctx, server):
    """Blind face restoration benchmark toolkit."""
    ctx.obj = {"server": server}


@main.command()
@click.option("--hq", "hq_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--setting", required=True, type=click.Choice(SETTINGS))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--threads", envvar="BFRBENCH_THREADS", default=1, show_default=True, type=int)
@click.option("--chroma", type=click.Choice(["444", "420"]), default="444", show_default=True)
@click.option("--strict", is_flag=True, help="Abort on the first unreadable image.")
@click.pass_context
def degrade(ctx, hq_dir, setting, seed, out_dir, threads, chroma, strict):
    """Synthesize a low-quality setting from a directory of HQ images."""
    code, body = _dispatch(ctx.obj["server"], "/degrade", {
        "hq_dir": hq_dir, "setting": setting, "seed": seed, "out_dir": out_dir,
        "threads": threads, "chroma": chroma, "strict": strict})
    if body is not None:
        click.echo(f"degraded {body['images']} images -> {body['manifest']}")
        for line in body["errors"]:
            click.echo(f"warning: {line}", err=True)
        code = 1 if body["errors"] else 0
    sys.exit(code)


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--epochs", default=3, show_default=True, type=int)
@click.option("--lr", default=0.001, show_default=True, type=float)
@click.option("--batch-size", default=4, show_default=True, type=int)
@click.option("--momentum", default=0.0, show_default=True, type=float)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON file mirroring the model config.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--split", type=click.Choice(["all", "train", "test"]),
              default="all", show_default=True)
@click.option("--out", "out_ckpt", required=True, type=click.Path(dir_okay=False))
@click.option("--log", "log_path", type=click.Path(dir_okay=False))
@click.option("--strict", is_flag=True)
@click.pass_context
def train(ctx, manifest, epochs, lr, batch_size, momentum, config_path, seed,
          split, out_ckpt, log_path, strict):
    """Train from a manifest and write a checkpoint plus a loss log."""
    config = None
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    code, body = _dispatch(ctx.obj["server"], "/train", {
        "manifest": manifest, "epochs": epochs, "lr": lr,
        "batch_size": batch_size, "momentum": momentum, "config": config,
        "seed": seed, "split": split, "out": out_ckpt, "log": log_path,
        "strict": strict})
    if body is not None:
        first, last = body["first_loss"], body["final_loss"]
        summary = (f"first loss {first:.6f}, final loss {last:.6f}"
                   if first is not None else "no iterations")
        click.echo(f"trained {body['iterations']} iterations ({summary})")
        click.echo(f"checkpoint: {body['checkpoint']}\nloss log: {body['log']}")
        for line in body["warnings"]:
            click.echo(f"warning: {line}", err=True)
    sys.exit(code)


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def restore(ctx, ckpt, in_dir, out_dir):
    """Restore every image in a directory with a trained checkpoint."""
    code, body = _dispatch(ctx.obj["server"], "/restore", {
        "ckpt": ckpt, "in_dir": in_dir, "out_dir": out_dir})
    if body is not None:
        click.echo(f"restored {body['images']} images -> {out_dir}")
    sys.exit(code)


@main.command()
@click.option("--restored", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--gt", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--metrics", default="psnr,ssim,ms_ssim", show_default=True,
              help="Comma-separated subset of " + ",".join(METRICS))
@click.option("--landmarks", type=click.Path(exists=True, dir_okay=False),
              help="JSON-lines landmarks for the restored images.")
@click.option("--gt-landmarks", type=click.Path(exists=True, dir_okay=False),
              help="JSON-lines landmarks for the ground-truth images.")
@click.option("--embeddings", type=click.Path(exists=True, dir_okay=False))
@click.option("--gt-embeddings", type=click.Path(exists=True, dir_okay=False))
@click.option("--niqe-model", type=click.Path(exists=True, dir_okay=False))
@click.option("--msssim-scales", default=5, show_default=True, type=int)
@click.option("--threads", envvar="BFRBENCH_THREADS", default=1, show_default=True, type=int)
@click.option("--out", "out_prefix", required=True,
              help="Report prefix; writes <prefix>.csv and <prefix>.json.")
@click.pass_context
def evaluate(ctx, restored, gt, metrics, landmarks, gt_landmarks, embeddings,
             gt_embeddings, niqe_model, msssim_scales, threads, out_prefix):
    """Score restored images against ground truth."""
    code, body = _dispatch(ctx.obj["server"], "/evaluate", {
        "restored": restored, "gt": gt,
        "metrics": [m.strip() for m in metrics.split(",") if m.strip()],
        "landmarks": landmarks, "gt_landmarks": gt_landmarks,
        "embeddings": embeddings, "gt_embeddings": gt_embeddings,
        "niqe_model": niqe_model, "msssim_scales": msssim_scales,
        "threads": threads, "out_prefix": out_prefix})
    if body is not None:
        click.echo(f"evaluated {body['images']} image pairs")
        for name, entry in body["aggregates"].items():
            arrow = "higher" if entry["higher_is_better"] else "lower"
            click.echo(f"  {name}: {entry['value']:.6f} ({arrow} is better)")
        click.echo(f"report: {body['csv']} / {body['json_report']}")
        for line in body["errors"]:
            click.echo(f"warning: {line}", err=True)
        code = 1 if body["errors"] else 0
    sys.exit(code)


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--train-fraction", default=0.9, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", type=click.Path(dir_okay=False),
              help="Output manifest; default rewrites in place.")
@click.pass_context
def split(ctx, manifest, train_fraction, seed, out):
    """Assign a deterministic per-id train/test split to a manifest."""
    code, body = _dispatch(ctx.obj["server"], "/split", {
        "manifest": manifest, "train_fraction": train_fraction,
        "seed": seed, "out": out})
    if body is not None:
        click.echo(f"split {body['train']} train / {body['test']} test "
                   f"-> {body['manifest']}")
    sys.exit(code)


@main.command("niqe-fit")
@click.option("--pristine", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--patch", default=32, show_default=True, type=int)
@click.option("--quantile", default=0.75, show_default=True, type=float)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def niqe_fit(ctx, pristine, patch, quantile, out):
    """Fit the pristine NIQE model from a clean image corpus."""
    code, body = _dispatch(ctx.obj["server"], "/niqe-fit", {
        "pristine": pristine, "patch": patch, "quantile": quantile, "out": out})
    if body is not None:
        click.echo(f"model written to {body['model']} "
                   f"(patch {body['patch']}, quantile {body['quantile']})")
    sys.exit(code)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8023, show_default=True, type=int)
def serve(host, port):
    """Run the benchmark service over HTTP."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
