"""Operator command line over file-backed state.

All state lives in plain files: a canonical-binding JSON the client trusts,
a registry snapshot JSON, and a content-addressed store directory (plus
optional replica directories). Every command that touches the registry
fails closed when the binding file is missing or disagrees with the
snapshot's identity.

Passphrases come from an interactive no-echo prompt. The VADAR_PASSPHRASE /
VADAR_NEW_PASSPHRASE environment variables are honored only together with
--insecure-env: scriptable for CI, impossible to use by accident.

Exit codes: 0 success; 2 user error (bad input, wrong passphrase or not
registered); 3 integrity failure (commitment mismatch, bad authorization,
stale version); 4 availability (storage or registry unreachable);
5 configuration (binding mismatch, KDF floor, missing or invalid files).
"""
from __future__ import annotations

import argparse
import getpass
import hashlib
import json
import os
import sys
from pathlib import Path

from . import flows, games, storage as storage_mod
from .artifact import RootEntityValue, WrongPassphraseOrTampered
from .identity import (
    NORM_POLICY_ID,
    EmptyIdentifier,
    MalformedEncoding,
    decode_discovery_id,
    discovery_id,
    normalize,
)
from .keyschedule import (
    Domain,
    KdfParamsOutOfRange,
    KdfProfile,
    Passphrase,
    PROFILES,
    derive_domain_key,
    derive_lookup_root,
    derive_lookup_salt,
    get_profile,
)
from .registry import (
    AlreadyTombstoned,
    BadAuth,
    BadVersion,
    CanonicalBinding,
    FileOwnerKeyStore,
    Registry,
    RegistryIdentity,
    RegistryMismatch,
    SlotOccupied,
    StaleVersion,
    Tombstoned,
    check_binding,
)

EXIT_OK = 0
EXIT_USER = 2
EXIT_INTEGRITY = 3
EXIT_AVAILABILITY = 4
EXIT_CONFIG = 5

DEFAULT_MIN_PASSPHRASE_CHARS = 8


class ConfigError(Exception):
    """CLI configuration is missing, unreadable, or inconsistent."""


class UserError(Exception):
    """Bad operator input."""


class CliConfig:
    """Validated view of the config file plus loaded binding and profile."""

    def __init__(self, path: Path):
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        base = path.resolve().parent

        def _resolve(p: str) -> Path:
            q = Path(p)
            return q if q.is_absolute() else base / q

        try:
            self.binding_path = _resolve(doc["binding_path"])
            self.store_dir = _resolve(doc["store_dir"])
            self.registry_path = _resolve(doc["registry_path"])
            profile_ref = doc["kdf_profile"]
            model = doc.get("owner_key_model", "random")
            self.redirect_on_rotation = bool(doc.get("redirect_on_rotation", False))
            self.owner_keys_dir = _resolve(doc.get("owner_keys_dir", "owner-keys"))
            self.replica_dirs = [_resolve(d) for d in doc.get("replica_dirs", [])]
            self.min_passphrase_chars = int(
                doc.get("passphrase_min_chars", DEFAULT_MIN_PASSPHRASE_CHARS))
        except KeyError as e:
            raise ConfigError(f"config {path} is missing key {e}") from e

        try:
            self.owner_key_model = flows.OwnerKeyModel(model)
        except ValueError:
            raise ConfigError(
                f"owner_key_model must be 'random' or 'derived', got {model!r}"
            ) from None

        if not self.binding_path.exists():
            raise ConfigError(
                f"canonical binding file not found: {self.binding_path}; "
                f"refusing to touch any registry without it")
        try:
            self.binding = CanonicalBinding.load(self.binding_path)
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as e:
            raise ConfigError(f"cannot parse binding {self.binding_path}: {e}") from e

        if str(profile_ref).endswith(".json"):
            profile_path = _resolve(profile_ref)
            try:
                self.profile = KdfProfile.load(profile_path)
            except (OSError, json.JSONDecodeError, KeyError) as e:
                raise ConfigError(f"cannot load KDF profile {profile_path}: {e}") from e
        else:
            try:
                self.profile = get_profile(str(profile_ref))
            except KeyError as e:
                raise ConfigError(str(e)) from e

        if self.binding.kdf_profile_id != self.profile.name:
            raise ConfigError(
                f"binding pins KDF profile {self.binding.kdf_profile_id!r} "
                f"but config selects {self.profile.name!r}")
        if self.binding.norm_policy_id != NORM_POLICY_ID:
            raise ConfigError(
                f"binding pins normalization policy "
                f"{self.binding.norm_policy_id!r}; this client implements "
                f"{NORM_POLICY_ID!r}")

    def open_registry(self) -> Registry:
        if self.registry_path.exists():
            try:
                reg = Registry.load_snapshot(self.registry_path)
            except (OSError, json.JSONDecodeError, KeyError, ValueError) as e:
                raise ConfigError(
                    f"cannot load registry snapshot {self.registry_path}: {e}"
                ) from e
        else:
            reg = Registry(RegistryIdentity(
                app_id=self.binding.app_id,
                chain_id=self.binding.chain_id,
                contract_address=self.binding.contract_address,
            ))
        check_binding(reg.identity, self.binding)
        return reg

    def flow_config(self, registry: Registry) -> flows.FlowConfig:
        backends: list = [storage_mod.FileBackend(self.store_dir, name="store")]
        for i, d in enumerate(self.replica_dirs):
            backends.append(storage_mod.FileBackend(d, name=f"replica-{i}"))
        return flows.FlowConfig(
            binding=self.binding,
            kdf_profile=self.profile,
            owner_key_model=self.owner_key_model,
            storage_backends=backends,
            registry=registry,
            owner_key_store=FileOwnerKeyStore(self.owner_keys_dir),
            redirect_on_rotate=self.redirect_on_rotation,
        )


def _read_passphrase(args, prompt: str, env_var: str = "VADAR_PASSPHRASE",
                     confirm: bool = False) -> str:
    env_val = os.environ.get(env_var)
    if env_val is not None and args.insecure_env:
        return env_val
    if env_val is not None and not args.insecure_env:
        print(f"note: {env_var} is set but ignored without --insecure-env",
              file=sys.stderr)
    text = getpass.getpass(prompt)
    if confirm:
        again = getpass.getpass("Confirm: ")
        if again != text:
            raise UserError("passphrases do not match")
    return text


def _require_policy(text: str, min_chars: int) -> None:
    if len(text) < min_chars:
        raise UserError(
            f"passphrase shorter than the configured minimum of {min_chars} "
            f"characters")


def _write_secret_file(path: Path, data: bytes) -> None:
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "wb") as fh:
        fh.write(data)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_register(args) -> int:
    cfg = CliConfig(Path(args.config))
    rev_bytes = Path(args.rev_file).read_bytes()
    if len(rev_bytes) != 32:
        raise UserError(f"rev file must hold exactly 32 bytes, got {len(rev_bytes)}")
    text = _read_passphrase(args, "Passphrase: ", confirm=True)
    _require_policy(text, cfg.min_passphrase_chars)
    registry = cfg.open_registry()
    config = cfg.flow_config(registry)
    did, cid, ver = flows.register(
        args.identifier, Passphrase.from_text(text),
        RootEntityValue(rev_bytes), config)
    registry.save_snapshot(cfg.registry_path)
    print(f"registered did={did.hex} ver={ver}")
    print(f"artifact cid={cid.hex}")
    return EXIT_OK


def cmd_recover(args) -> int:
    cfg = CliConfig(Path(args.config))
    text = _read_passphrase(args, "Passphrase: ")
    registry = cfg.open_registry()
    config = cfg.flow_config(registry)
    outcome = flows.recover(args.identifier, Passphrase.from_text(text), config)
    try:
        if args.verify_only:
            digest = hashlib.sha256(outcome.rev.bytes).hexdigest()
            print(f"recovered ver={outcome.record_ver} rev-commitment={digest}")
        else:
            out = Path(args.out)
            _write_secret_file(out, outcome.rev.bytes)
            print(f"recovered ver={outcome.record_ver} rev written to {out}")
    finally:
        outcome.rev.wipe()
    return EXIT_OK


def cmd_update(args) -> int:
    cfg = CliConfig(Path(args.config))
    text = _read_passphrase(args, "Passphrase: ")
    registry = cfg.open_registry()
    config = cfg.flow_config(registry)
    outcome = flows.recover(args.identifier, Passphrase.from_text(text), config)
    did, ver = flows.update_backup(
        args.identifier, Passphrase.from_text(text), Passphrase.from_text(text),
        outcome.rev, config)
    registry.save_snapshot(cfg.registry_path)
    print(f"updated did={did.hex} ver={ver}")
    return EXIT_OK


def cmd_rotate(args) -> int:
    cfg = CliConfig(Path(args.config))
    old_text = _read_passphrase(args, "Current passphrase: ")
    new_text = _read_passphrase(args, "New passphrase: ",
                                env_var="VADAR_NEW_PASSPHRASE", confirm=True)
    _require_policy(new_text, cfg.min_passphrase_chars)
    if new_text == old_text:
        raise UserError("new passphrase equals the current one; use 'update' "
                        "to re-seal without rotating")
    registry = cfg.open_registry()
    config = cfg.flow_config(registry)
    if args.redirect:
        config.redirect_on_rotate = True
    outcome = flows.recover(args.identifier, Passphrase.from_text(old_text), config)
    did, ver = flows.update_backup(
        args.identifier, Passphrase.from_text(old_text),
        Passphrase.from_text(new_text), outcome.rev, config)
    registry.save_snapshot(cfg.registry_path)
    print(f"rotated: new did={did.hex} ver={ver}; previous slot tombstoned"
          + (" with redirect" if config.redirect_on_rotate else ""))
    return EXIT_OK


def cmd_inspect(args) -> int:
    cfg = CliConfig(Path(args.config))
    registry = cfg.open_registry()
    if args.did:
        did = decode_discovery_id(args.did)
    else:
        # computed locally from identifier + passphrase; nothing raw leaves
        # this process
        text = _read_passphrase(args, "Passphrase: ")
        ident = normalize(args.identifier)
        salt = derive_lookup_salt(ident)
        pw = Passphrase.from_text(text)
        root = derive_lookup_root(pw, salt, cfg.profile.stage_a,
                                  floor_kib=cfg.profile.floor_kib)
        k_idx = derive_domain_key(root, Domain.INDEX)
        config = cfg.flow_config(registry)
        did = discovery_id(k_idx, config.context(), ident)
        for s in (pw, root, k_idx):
            s.wipe()
    record = registry.lookup(did)
    if record is None:
        print(f"did={did.hex}: absent")
        return EXIT_OK
    doc = {
        "cid_hex": record.cid.hex,
        "commit_hex": record.commit.hex,
        "pk_owner_hex": record.pk_owner.hex(),
        "sig_alg": record.sig_alg,
        "state": record.state.value,
        "ver": record.ver,
    }
    if record.redirect is not None:
        doc["redirect"] = record.redirect.hex
    if record.migrated_at is not None:
        doc["migrated_at"] = record.migrated_at
    print(f"did={did.hex}")
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_games(args) -> int:
    profile = get_profile(args.kdf_profile)
    if args.game == "enum":
        budget = args.budget if args.budget is not None else (1 << args.mu)
        report = games.run_enum_game(
            trials=args.trials, dictionary_size=args.dictionary_size,
            passphrase_space=1 << args.mu, kdf_profile=profile,
            strategy=games.UniformGuesser(budget), seed=args.seed)
    elif args.game == "map":
        report = games.run_map_game(trials=args.trials, seed=args.seed,
                                    mu_bits=args.mu, kdf_profile=profile)
    else:
        report = games.run_roll_game(trials=args.trials, kdf_profile=profile,
                                     seed=args.seed)
    print(report.to_table())
    print(report.to_json())
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vadar",
        description="Keyed discovery-and-recovery over file-backed state.")
    parser.add_argument("--config", default="vadar-config.json",
                        help="path to the CLI config JSON")
    parser.add_argument("--insecure-env", action="store_true",
                        help="allow passphrases from VADAR_PASSPHRASE / "
                             "VADAR_NEW_PASSPHRASE (tests and CI only)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="first-time registration")
    p.add_argument("--identifier", required=True)
    p.add_argument("--rev-file", required=True,
                   help="file holding the 32-byte root secret to back up")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("recover", help="recover the root secret")
    p.add_argument("--identifier", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--out", help="write recovered secret to this path (0600)")
    g.add_argument("--verify-only", action="store_true",
                   help="print only the SHA-256 of the recovered secret")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("update", help="re-seal with the same passphrase "
                                      "(fresh salt, version + 1)")
    p.add_argument("--identifier", required=True)
    p.set_defaults(func=cmd_update)

    p = sub.add_parser("rotate", help="rotate to a new passphrase "
                                      "(new slot, old slot tombstoned)")
    p.add_argument("--identifier", required=True)
    p.add_argument("--redirect", action="store_true",
                   help="leave a public pointer from the old slot to the new "
                        "one (links the two publicly)")
    p.set_defaults(func=cmd_rotate)

    p = sub.add_parser("inspect", help="print the registry record for a slot")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--did", help="discovery id (64-char hex or base64url)")
    g.add_argument("--identifier",
                   help="compute the discovery id locally (prompts for the "
                        "passphrase)")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("games", help="run an adversarial game batch")
    p.add_argument("game", choices=["enum", "map", "roll"])
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--mu", type=int, default=8,
                   help="passphrase space is 2^mu equally likely words")
    p.add_argument("--budget", type=int, default=None,
                   help="guesses per trial for the enum adversary "
                        "(default: exhaustive)")
    p.add_argument("--dictionary-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--kdf-profile", default="dev")
    p.set_defaults(func=cmd_games)

    return parser


_USER_ERRORS = (UserError, EmptyIdentifier, MalformedEncoding,
                WrongPassphraseOrTampered, flows.NotRegistered,
                flows.NotRecoverableWithThisPassphrase, SlotOccupied,
                BadVersion)
_INTEGRITY_ERRORS = (flows.CommitMismatch, flows.RedirectLoop,
                     flows.OwnerKeyUnavailable, BadAuth, StaleVersion,
                     Tombstoned, AlreadyTombstoned)
_AVAILABILITY_ERRORS = (flows.StorageUnavailable, storage_mod.AllBackendsFailed,
                        storage_mod.BackendUnavailable, storage_mod.NotFound)
_CONFIG_ERRORS = (ConfigError, RegistryMismatch, KdfParamsOutOfRange)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except _AVAILABILITY_ERRORS as e:
        print(f"availability error: {e}", file=sys.stderr)
        return EXIT_AVAILABILITY
    except _INTEGRITY_ERRORS as e:
        print(f"integrity error: {e}", file=sys.stderr)
        return EXIT_INTEGRITY
    except _USER_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USER
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
