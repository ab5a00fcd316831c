"""Command line front end: user workflow, benchmarks, security games.

Exit codes: 0 success, 1 a game or benchmark property failed, 2 local
error, 3 registrar error, 4 vending-service error.
"""

import json
import sys
from pathlib import Path

import click

from . import client as client_mod


def _croak(exc: client_mod.ClientError) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(exc.exit_code)


def _parse_addr(ctx, param, value):
    if value is None:
        return None
    host, _, port = value.rpartition(":")
    try:
        return host, int(port)
    except ValueError:
        raise click.BadParameter("expected HOST:PORT") from None


def _parse_ints(ctx, param, value):
    try:
        return tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter("expected a comma-separated list of integers") from None


_store_option = click.option(
    "--store", "store_dir", type=click.Path(path_type=Path), required=True,
    help="Directory holding the encrypted note store.",
)
_passphrase_option = click.option(
    "--passphrase", envvar="VEILKEY_PASSPHRASE", prompt=True, hide_input=True,
    help="Store passphrase; VEILKEY_PASSPHRASE is honored.",
)
_as_option = click.option("--as-url", required=True, help="Registrar base URL.")


@click.group()
@click.version_option(package_name="veilkey")
def main():
    """Anonymous delivery of high-entropy key material."""


@main.command("init")
@_store_option
@_passphrase_option
@click.option("--lam", default=256, show_default=True, help="Security parameter in bits.")
@click.option("--kem-profile", default="dh", show_default=True)
@click.option("--hash-profile", default="algebraic", show_default=True)
def cmd_init(store_dir, passphrase, lam, kem_profile, hash_profile):
    """Create a fresh note and print its commitment."""
    try:
        with client_mod.open_store(store_dir, passphrase, create_ok=True) as store:
            note_id, commitment = client_mod.Client(store).init_note(
                lam, kem_profile, hash_profile
            )
    except client_mod.ClientError as exc:
        _croak(exc)
    click.echo(f"note {note_id}")
    click.echo(f"commitment {commitment.hex()}")


@main.command("auth")
@_store_option
@_passphrase_option
@click.option("--note", "note_id", required=True, help="Note id from init.")
@click.option("--cert", type=click.Path(path_type=Path, exists=True), required=True,
              help="Certificate issued by the CA.")
@click.option("--key", "key_path", type=click.Path(path_type=Path, exists=True),
              required=True, help="Signing key matching the certificate.")
@_as_option
def cmd_auth(store_dir, passphrase, note_id, cert, key_path, as_url):
    """Register the note's commitment with the registrar."""
    try:
        with client_mod.open_store(store_dir, passphrase) as store:
            new_root = client_mod.Client(store, as_url=as_url).register(
                note_id, cert.read_bytes(), key_path.read_bytes()
            )
    except client_mod.ClientError as exc:
        _croak(exc)
    click.echo(f"registered; new root {new_root.hex()}")


@main.command("prove")
@_store_option
@_passphrase_option
@click.option("--note", "note_id", required=True)
@_as_option
@click.option("--t", "t", default=client_mod.DEFAULT_T, show_default=True,
              help="Requested key size in bytes, embedded in the bundle.")
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Bundle path; defaults to <note>.bundle.")
def cmd_prove(store_dir, passphrase, note_id, as_url, t, out):
    """Build a membership proof against a freshly fetched tree."""
    out = out or Path(f"{note_id}.bundle")
    try:
        with client_mod.open_store(store_dir, passphrase) as store:
            envelope = client_mod.Client(store, as_url=as_url).prove(note_id, t)
    except client_mod.ClientError as exc:
        _croak(exc)
    out.write_bytes(envelope)
    click.echo(f"bundle {out} ({len(envelope)} bytes, t={t})")


@main.command("request-key")
@_store_option
@_passphrase_option
@click.option("--bundle", type=click.Path(path_type=Path, exists=True), required=True)
@click.option("--t", "t", type=int, default=None,
              help="Override the key size embedded in the bundle.")
@click.option("--pvs-addr", callback=_parse_addr, required=True,
              help="Vending service tunnel address, HOST:PORT.")
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Key file; defaults to the bundle name with .key.")
def cmd_request_key(store_dir, passphrase, bundle, t, pvs_addr, out):
    """Redeem a bundle over the tunnel and write the decapsulated key."""
    out = out or bundle.with_suffix(".key")
    try:
        with client_mod.open_store(store_dir, passphrase) as store:
            key = client_mod.Client(store, pvs_addr=pvs_addr).request_key(
                bundle.read_bytes(), t=t, out_path=out
            )
    except client_mod.ClientError as exc:
        _croak(exc)
    click.echo(f"key {out} ({len(key)} bytes)")


@main.command("show")
@_store_option
@_passphrase_option
def cmd_show(store_dir, passphrase):
    """List notes and their states."""
    try:
        with client_mod.open_store(store_dir, passphrase) as store:
            rows = client_mod.Client(store).show()
    except client_mod.ClientError as exc:
        _croak(exc)
    if not rows:
        click.echo("no notes")
        return
    click.echo(f"{'note':<10} {'status':<12} {'lam':>4}  {'kem':<4} root")
    for row in rows:
        click.echo(
            f"{row['note']:<10} {row['status']:<12} {row['lam']:>4}  "
            f"{row['kem_profile']:<4} {row['registered_root'] or '-'}"
        )


# ---------------------------------------------------------------------------
# Benchmarks and security games
# ---------------------------------------------------------------------------


def _emit(summary: dict, records: list, out: Path | None) -> None:
    if out is None:
        return
    from . import bench_harness

    bench_harness.write_jsonl(records, out)
    bench_harness.write_csv(records, out.with_suffix(".csv"))
    click.echo(f"wrote {out} and {out.with_suffix('.csv')}")


@main.group()
def bench():
    """Desk-scale performance measurements."""


@bench.command("prove-scaling")
@click.option("--depths", default="4,8,12,16", callback=_parse_ints, show_default=True)
@click.option("--samples", default=2, show_default=True)
@click.option("--seed", default="bench", show_default=True)
@click.option("--backend", default="groth16", show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
def bench_prove_scaling(depths, samples, seed, backend, out):
    """Prove/verify timings and constraint counts across tree depths."""
    from . import bench_harness

    summary = bench_harness.bench_prove_scaling(
        depths, samples=samples, seed=seed.encode(), backend=backend
    )
    for record in summary["records"]:
        m, p = record["metrics"], record["params"]
        click.echo(
            f"depth {p['depth']:>2}: {m['constraints']} constraints, "
            f"prove {m['prove_s']:.3f}s, verify {m['verify_s'] * 1000:.1f}ms"
        )
    for name, fit in summary["fits"].items():
        click.echo(f"fit {name}: slope {fit['slope']:.4g}, r2 {fit['r2']:.5f}")
    click.echo(f"verify spread max/min {summary['verify_spread']:.2f}")
    _emit(summary, summary["records"], out)


@bench.command("key-request")
@click.option("--sizes", default="32,256,4096", callback=_parse_ints, show_default=True)
@click.option("--rate", default=12000.0, show_default=True,
              help="Tunnel rate limit in bytes/second.")
@click.option("--seed", default="bench", show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
def bench_key_request(sizes, rate, seed, out):
    """Phase breakdown of full key-request sessions across key sizes."""
    from . import bench_harness

    summary = bench_harness.bench_key_request(sizes, rate=rate, seed=seed.encode())
    for record in summary["records"]:
        m, p = record["metrics"], record["params"]
        click.echo(
            f"t {p['t']:>5}: total {m['total_s']:.3f}s, transfer share "
            f"{m['transfer_share']:.2f}, generate share {m['generate_share']:.2f}"
        )
    _emit(summary, summary["records"], out)


@bench.command("core-compare")
@click.option("--out", type=click.Path(path_type=Path), default=None)
def bench_core_compare(out):
    """Time the hot kernels on every importable arithmetic core."""
    from . import bench_harness

    summary = bench_harness.bench_core_comparison()
    for record in summary["records"]:
        m, p = record["metrics"], record["params"]
        click.echo(f"{p['core']:>8} {p['kernel']:<22} {m['per_op_s'] * 1000:.3f} ms/op")
    for kernel, ratio in summary.get("speedups", {}).items():
        click.echo(f"speedup {kernel}: {ratio:.1f}x")
    _emit(summary, summary["records"], out)


@main.group()
def games():
    """Security properties as concrete adversarial suites."""


def _run_game(fn, out: Path | None, **kw):
    summary = fn(**kw)
    for line in summary["report"]:
        click.echo(line)
    _emit(summary, summary["records"], out)
    if not summary["ok"]:
        click.echo("FAILED", err=True)
        sys.exit(1)
    click.echo("ok")


@games.command("unforgeability")
@click.option("--trials", default=200, show_default=True)
@click.option("--seed", default="game", show_default=True)
@click.option("--backend", default="groth16", show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
def games_unforgeability(trials, seed, backend, out):
    from . import bench_harness

    _run_game(bench_harness.game_unforgeability, out, trials=trials, seed=seed.encode(), backend=backend)


@games.command("anonymity")
@click.option("--trials", default=200, show_default=True)
@click.option("--seed", default="game", show_default=True)
@click.option("--backend", default="groth16", show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
def games_anonymity(trials, seed, backend, out):
    from . import bench_harness

    _run_game(bench_harness.game_anonymity, out, trials=trials, seed=seed.encode(), backend=backend)


@games.command("confidentiality")
@click.option("--trials", default=50, show_default=True)
@click.option("--seed", default="game", show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
def games_confidentiality(trials, seed, out):
    from . import bench_harness

    _run_game(bench_harness.game_confidentiality, out, trials=trials, seed=seed.encode())


@games.command("all")
@click.option("--trials", default=1000, show_default=True)
@click.option("--seed", default="game", show_default=True)
@click.option("--backend", default="groth16", show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
def games_all(trials, seed, backend, out):
    from . import bench_harness

    _run_game(bench_harness.games_all, out, trials=trials, seed=seed.encode(), backend=backend)


if __name__ == "__main__":
    main()
