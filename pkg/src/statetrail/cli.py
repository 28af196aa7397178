"""Command-line client: execution control, tracking, verification, demo.

All commands operate against a file-backed ledger in one working
directory (``--dir`` or STATETRAIL_DIR), which lets multiple processes
act as independent parties without networking. Output is line-oriented
JSON with sorted keys; identical inputs against identical ledger state
produce byte-identical stdout. Exit code 0 means full success, anything
else maps a stable error name (see errors.EXIT_CODES).
"""

from __future__ import annotations

import json
import secrets
import shutil
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import click

from .demo import EXPORTS_DIR, LEDGER_FILE, STORE_DIR, derive_account, multiparty
from .engine import Engine, state_hash
from .errors import (
    ChainCorrupt,
    TrailError,
    UnknownSender,
    UnknownSubject,
    VerificationFailed,
    exit_code,
)
from .ledger import Ledger, verify_chain_file
from .model import canonical_serialize, load_model_file, model_hash, parse_model_bytes
from .registry import Descriptor, Registry, call_delegate_access, call_register_model
from .store import DirectoryContentStore
from .tracker import STATUS_VERIFIED, Tracker


@dataclass
class CliConfig:
    ledger_path: Path
    store_path: Path
    account_file: Path
    batch_size: int
    seed: int | None
    account: str | None


def emit(obj: dict) -> None:
    click.echo(json.dumps(obj, sort_keys=True))


class TrailGroup(click.Group):
    """Maps TrailError raised by any command to its stable exit code."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except TrailError as exc:
            emit({"detail": str(exc), "error": exc.name})
            sys.exit(exit_code(exc))


@click.group(cls=TrailGroup)
@click.option("--dir", "workdir", envvar="STATETRAIL_DIR", default=".",
              type=click.Path(file_okay=False), help="Working directory.")
@click.option("--account", default=None, help="Sender account id (0x-hex).")
@click.option("--account-file", default=None, type=click.Path(dir_okay=False),
              help="File holding the sender account id.")
@click.option("--batch-size", default=1, show_default=True,
              help="Transactions per committed block.")
@click.option("--seed", default=None, type=int, help="Seed for account derivation.")
@click.pass_context
def cli(ctx, workdir, account, account_file, batch_size, seed):
    """Tracked execution of state-machine models on a simulated ledger."""
    base = Path(workdir)
    ctx.obj = CliConfig(
        ledger_path=base / LEDGER_FILE,
        store_path=base / STORE_DIR,
        account_file=Path(account_file) if account_file else base / "account.json",
        batch_size=batch_size,
        seed=seed,
        account=account,
    )


def _services(cfg: CliConfig) -> tuple[Ledger, Registry, DirectoryContentStore]:
    cfg.ledger_path.parent.mkdir(parents=True, exist_ok=True)
    registry = Registry()
    ledger = Ledger.open(cfg.ledger_path, registry, batch_size=cfg.batch_size)
    return ledger, registry, DirectoryContentStore(cfg.store_path)


def _sender(cfg: CliConfig) -> str:
    if cfg.account:
        return cfg.account
    if cfg.account_file.exists():
        return json.loads(cfg.account_file.read_text())["account"]
    raise UnknownSender("no account configured; create one with `account new`")


def _engine(cfg: CliConfig) -> tuple[Engine, Ledger, Registry, DirectoryContentStore]:
    ledger, registry, store = _services(cfg)
    engine = Engine(ledger, registry, store, _sender(cfg))
    return engine, ledger, registry, store


def _tracker(cfg: CliConfig) -> Tracker:
    ledger, registry, store = _services(cfg)
    tracker = Tracker(ledger, registry, store)
    tracker.catch_up()
    return tracker


def _protocol(cfg: CliConfig, instance_hash: str) -> Tracker:
    tracker = _tracker(cfg)
    if instance_hash not in tracker.protocols:
        raise UnknownSubject(f"no protocol for instance {instance_hash}")
    return tracker


# ---------------------------------------------------------------------- account

@cli.group()
def account():
    """Account management."""


@account.command("new")
@click.option("--save/--no-save", default=True, show_default=True,
              help="Write the account id to the account file.")
@click.pass_obj
def account_new(cfg: CliConfig, save):
    """Create a fresh account through the faucet and print its id."""
    ledger, _, _ = _services(cfg)
    if cfg.seed is not None:
        new_id = derive_account(cfg.seed, len(ledger.known_accounts()))
    else:
        new_id = "0x" + secrets.token_hex(20)
    receipt = ledger.create_account(new_id)
    if receipt.status == "pending":
        ledger.commit_block()
    if save:
        cfg.account_file.parent.mkdir(parents=True, exist_ok=True)
        cfg.account_file.write_text(json.dumps({"account": new_id}, sort_keys=True) + "\n")
    emit({"account": new_id})


# ------------------------------------------------------------------------ model

@cli.group()
def model():
    """Model registration."""


@model.command("register")
@click.argument("model_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--id", "descriptor_id", default=None, help="Descriptor id.")
@click.option("--name", "descriptor_name", default=None, help="Descriptor name.")
@click.pass_obj
def model_register(cfg: CliConfig, model_file, descriptor_id, descriptor_name):
    """Validate, hash, store and register a model file."""
    machine = load_model_file(model_file)
    engine, _, _, store = _engine(cfg)
    store.put(canonical_serialize(machine))
    mh = model_hash(machine)
    descriptor = Descriptor(id=descriptor_id or machine.name,
                            name=descriptor_name or machine.name)
    engine.submit_call(call_register_model(mh, descriptor))
    emit({"model_hash": mh})


@cli.command("delegate")
@click.argument("subject_hash")
@click.argument("delegate_account")
@click.pass_obj
def delegate(cfg: CliConfig, subject_hash, delegate_account):
    """Grant an account access to a model or instance you own."""
    engine, _, _, _ = _engine(cfg)
    engine.submit_call(call_delegate_access(subject_hash, delegate_account))
    emit({"delegate": delegate_account, "subject": subject_hash})


# --------------------------------------------------------------------- instance

@cli.group()
def instance():
    """Instance lifecycle."""


@instance.command("create")
@click.argument("model_hash_arg", metavar="MODEL_HASH")
@click.option("--nonce", required=True, type=int,
              help="Freshness nonce; part of the instance hash.")
@click.option("--id", "descriptor_id", default=None, help="Descriptor id.")
@click.option("--name", "descriptor_name", default=None, help="Descriptor name.")
@click.pass_obj
def instance_create(cfg: CliConfig, model_hash_arg, nonce, descriptor_id, descriptor_name):
    """Instantiate a registered model and register the instance."""
    engine, _, _, store = _engine(cfg)
    machine = parse_model_bytes(store.get(model_hash_arg))
    descriptor = Descriptor(id=descriptor_id or f"{machine.name}-{nonce}",
                            name=descriptor_name or machine.name)
    state = engine.instantiate(machine, descriptor, nonce)
    emit({
        "initial_state": state_hash(state),
        "instance_hash": state.instance_hash,
        "model_hash": model_hash_arg,
    })


@instance.command("step")
@click.argument("instance_hash")
@click.argument("transition_id")
@click.pass_obj
def instance_step(cfg: CliConfig, instance_hash, transition_id):
    """Fire one transition and register it on-chain."""
    engine, _, registry, store = _engine(cfg)
    state = engine.load_state(instance_hash)
    machine = parse_model_bytes(store.get(registry.get_instance(instance_hash).model_hash))
    _, record = engine.fire_and_register(state, machine, transition_id)
    emit({
        "instance_hash": instance_hash,
        "post_state": record.post_state,
        "seq": record.seq,
        "transition": transition_id,
    })


@instance.command("run")
@click.argument("instance_hash")
@click.option("--steps", default=10, show_default=True, type=int)
@click.option("--seed", "walk_seed", default=0, show_default=True, type=int)
@click.pass_obj
def instance_run(cfg: CliConfig, instance_hash, steps, walk_seed):
    """Random walk: fire seeded random enabled transitions, then terminate."""
    engine, _, registry, store = _engine(cfg)
    state = engine.load_state(instance_hash)
    machine = parse_model_bytes(store.get(registry.get_instance(instance_hash).model_hash))
    trace = engine.random_walk(machine, state, steps, walk_seed)
    for step in trace.steps:
        emit({"post_state": step.post_hash, "transition": step.transition_id})
    emit({"fired": len(trace.steps), "instance_hash": instance_hash, "terminated": True})


@instance.command("terminate")
@click.argument("instance_hash")
@click.pass_obj
def instance_terminate(cfg: CliConfig, instance_hash):
    """Terminate an active instance."""
    engine, _, _, _ = _engine(cfg)
    engine.terminate(instance_hash)
    emit({"instance_hash": instance_hash, "status": "terminated"})


# ------------------------------------------------------------------- tracking

@cli.command("track")
@click.option("--from-genesis", is_flag=True, default=True,
              help="Replay the event log from the zero cursor.")
@click.pass_obj
def track(cfg: CliConfig, from_genesis):
    """Follow ledger events and print protocol entries as they apply."""
    ledger, registry, store = _services(cfg)
    tracker = Tracker(ledger, registry, store)
    for entry in tracker.catch_up():
        emit(entry.to_dict())


@cli.group()
def protocol():
    """Instance protocol export and verification."""


@protocol.command("export")
@click.argument("instance_hash")
@click.pass_obj
def protocol_export(cfg: CliConfig, instance_hash):
    """Print the instance protocol as JSON Lines."""
    tracker = _protocol(cfg, instance_hash)
    sys.stdout.buffer.write(tracker.export(instance_hash))
    sys.stdout.buffer.flush()


@protocol.command("verify")
@click.argument("instance_hash")
@click.pass_obj
def protocol_verify(cfg: CliConfig, instance_hash):
    """Verify every protocol entry; exit 0 only if all entries verify."""
    tracker = _protocol(cfg, instance_hash)
    statuses = tracker.verify_protocol(instance_hash)
    for entry in tracker.protocols[instance_hash].entries:
        emit({"kind": entry.kind, "seq": entry.seq, "status": entry.status})
    ok = all(s == STATUS_VERIFIED for s in statuses)
    emit({"entries": len(statuses), "instance_hash": instance_hash, "verified": ok})
    if not ok:
        bad = sum(1 for s in statuses if s != STATUS_VERIFIED)
        raise VerificationFailed(f"{bad} of {len(statuses)} entries did not verify")


# ---------------------------------------------------------------------- chain

@cli.group()
def chain():
    """Ledger integrity."""


@chain.command("verify")
@click.pass_obj
def chain_verify(cfg: CliConfig):
    """Recompute all block hashes and linkage; exit 0 only if intact."""
    if not cfg.ledger_path.exists():
        raise ChainCorrupt(f"no ledger file at {cfg.ledger_path}")
    report = verify_chain_file(cfg.ledger_path)
    emit(report.to_dict())
    if not report.ok:
        raise ChainCorrupt(f"{report.reason} at height {report.first_bad_height}")


# ----------------------------------------------------------------------- demo

@cli.group()
def demo():
    """Scenario harnesses."""


@demo.command("multiparty")
@click.option("--parties", default=3, show_default=True, type=int)
@click.option("--steps", default=50, show_default=True, type=int)
@click.option("--seed", "demo_seed", default=7, show_default=True, type=int)
@click.option("--workdir", default=None, type=click.Path(file_okay=False),
              help="Scenario directory; defaults to a fresh temp dir.")
def demo_multiparty(parties, steps, demo_seed, workdir):
    """Full multi-party scenario; asserts convergence of all trackers."""
    if workdir is None:
        target = Path(tempfile.mkdtemp(prefix="statetrail-demo-"))
    else:
        target = Path(workdir)
        for stale in (target / LEDGER_FILE,):
            if stale.exists():
                stale.unlink()
        for stale_dir in (target / STORE_DIR, target / EXPORTS_DIR):
            if stale_dir.exists():
                shutil.rmtree(stale_dir)
    summary = multiparty(parties=parties, steps=steps, seed=demo_seed, workdir=target)
    click.echo(f"workdir: {target}", err=True)
    emit(summary)


def main() -> None:
    cli(auto_envvar_prefix="STATETRAIL")


if __name__ == "__main__":
    main()
