"""Desk-scale adversarial games backing the protocol's security claims.

Three games, each runnable standalone with pluggable adversary strategies:

* enum — can an observer tell a real keyed discovery id from a uniformly
  random one without the passphrase? The measured advantage is compared to
  the analytical guessing baseline: with k of 2^mu passphrases tried, the
  best win rate is 0.5 * (1 + k / 2^mu).
* map — can anyone mutate a victim's record without its owner key? Every
  forgery family (random signatures, bit-flipped valid signatures,
  transplants, stale resubmission, create-overwrite, tombstone forgery)
  must score zero accepted writes.
* roll — can stale or substituted content survive recovery? Replayed old
  registry writes must be rejected by version monotonicity, substituted
  blobs by content-id and commitment checks. A deliberate stale-view
  subharness violates the fresh-read assumption to show the residual risk
  that assumption carries.

Trials are self-contained: each owns a private registry and storage, so
batches can be executed in any order.
"""
from __future__ import annotations

import json
import random
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator

from . import keyschedule
from .artifact import Commitment, RootEntityValue, commit as commit_bytes
from .flows import FlowConfig, OwnerKeyModel, recover, register, update_backup
from .identity import DiscoveryContext, DiscoveryId, discovery_id, normalize
from .keyschedule import (
    Domain,
    KdfProfile,
    Passphrase,
    derive_domain_key,
    derive_lookup_root,
    derive_lookup_salt,
)
from .registry import (
    AuthKind,
    AuthMessage,
    AuthProof,
    CanonicalBinding,
    MemoryOwnerKeyStore,
    OwnerKey,
    RecordState,
    Registry,
    RegistryIdentity,
    RegistryRecord,
    SlotOccupied,
    StaleVersion,
    BadAuth,
    Tombstoned,
    AlreadyTombstoned,
    encode_tombstone_message,
)
from .storage import (
    AllBackendsFailed,
    ContentId,
    MemoryBackend,
    TamperingBackend,
)
from .flows import StorageUnavailable

_GAME_APP = "vadar-games"
_GAME_CONTRACT = bytes([0xA1] * 20)


@dataclass
class GameReport:
    """Outcome of one game batch, as JSON and as an aligned text table."""

    game: str
    trials: int
    adversary_wins: int
    baseline: str
    params: dict
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 <= self.adversary_wins <= self.trials:
            raise ValueError("adversary_wins must be within [0, trials]")

    def to_json_dict(self) -> dict:
        return {
            "adversary_wins": self.adversary_wins,
            "baseline": self.baseline,
            "extras": self.extras,
            "game": self.game,
            "params": self.params,
            "trials": self.trials,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows: list[tuple[str, str]] = [
            ("game", self.game),
            ("trials", str(self.trials)),
            ("adversary_wins", str(self.adversary_wins)),
            ("baseline", self.baseline),
        ]
        rows += [(f"params.{k}", str(v)) for k, v in sorted(self.params.items())]
        rows += [(f"extras.{k}", str(v)) for k, v in sorted(self.extras.items())]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


@contextmanager
def _kdf_memo() -> Iterator[None]:
    """Memoize the memory-hard KDF for the duration of a game batch.

    Game trials re-derive identical (secret, salt, params) tuples many
    times over; caching them changes nothing observable but wall time.
    Harness-local: never used by library code paths outside a game run.
    """
    real = keyschedule._argon2id
    cache: dict[tuple[bytes, bytes, tuple], bytes] = {}
    lock = threading.Lock()

    def memoized(secret: bytes, salt: bytes, params) -> bytes:
        key = (secret, salt, (params.memory_kib, params.time_cost,
                              params.parallelism))
        with lock:
            hit = cache.get(key)
        if hit is not None:
            return hit
        out = real(secret, salt, params)
        with lock:
            cache[key] = out
        return out

    keyschedule._argon2id = memoized
    try:
        yield
    finally:
        keyschedule._argon2id = real
        cache.clear()


def _game_context() -> DiscoveryContext:
    return DiscoveryContext(app_id=_GAME_APP, chain_id=1,
                            contract_address=_GAME_CONTRACT, version=1)


def _game_registry() -> Registry:
    return Registry(RegistryIdentity(app_id=_GAME_APP, chain_id=1,
                                     contract_address=_GAME_CONTRACT))


def _game_binding(profile_name: str) -> CanonicalBinding:
    return CanonicalBinding(
        app_id=_GAME_APP, chain_id=1, contract_address=_GAME_CONTRACT,
        norm_policy_id="trim-nfc-lower-v1", kdf_profile_id=profile_name)


def _insert_record(registry: Registry, did: DiscoveryId, owner: OwnerKey,
                   cid_bytes: bytes, commit_hash: bytes, ver: int = 1) -> None:
    cid = ContentId(cid_bytes)
    cmt = Commitment(commit_hash)
    msg = AuthMessage(did, cid, ver, cmt)
    registry.initialize(did, RegistryRecord(
        cid=cid, ver=ver, commit=cmt, pk_owner=owner.public_bytes,
        sig_alg=owner.sig_alg,
        auth=AuthProof(AuthKind.SIGNATURE_B, owner.sign(msg.encode()))))


# ---------------------------------------------------------------------------
# Enumeration game
# ---------------------------------------------------------------------------

@dataclass
class EnumChallenge:
    """Everything the adversary sees in one enumeration trial."""

    challenge_did: bytes
    target_identifier: str
    candidate_identifiers: list[str]
    passphrase_words: list[str]
    derive_did: Callable[[str, str], bytes]
    rng: random.Random


class UniformGuesser:
    """Tries a budget of passphrases, paying the full derivation per word.

    The word-to-id table is cached across trials: the target identifier and
    context are fixed, so a real attacker amortizes exactly the same way.
    """

    def __init__(self, budget: int):
        self.name = f"uniform-guesser-{budget}"
        self.budget = budget
        self._table: dict[str, bytes] = {}

    def play(self, view: EnumChallenge) -> int:
        if self.budget <= 0:
            return 0
        k = min(self.budget, len(view.passphrase_words))
        guesses = view.rng.sample(view.passphrase_words, k)
        for word in guesses:
            did = self._table.get(word)
            if did is None:
                did = view.derive_did(view.target_identifier, word)
                self._table[word] = did
            if did == view.challenge_did:
                return 1
        return 0


class ByteStatDistinguisher:
    """Guesses from byte statistics of the challenge id alone (no budget).

    A pseudorandom id gives this strategy nothing to grip: its advantage
    must be statistically indistinguishable from zero.
    """

    def __init__(self) -> None:
        self.name = "byte-stat-distinguisher"
        self.budget = 0

    def play(self, view: EnumChallenge) -> int:
        return sum(view.challenge_did) & 1


def _derive_did_fn(ctx: DiscoveryContext, params) -> Callable[[str, str], bytes]:
    def derive(identifier: str, word: str) -> bytes:
        ident = normalize(identifier)
        salt = derive_lookup_salt(ident)
        pw = Passphrase.from_text(word)
        root = derive_lookup_root(pw, salt, params)
        k_idx = derive_domain_key(root, Domain.INDEX)
        did = discovery_id(k_idx, ctx, ident)
        for s in (pw, root, k_idx):
            s.wipe()
        return did.bytes
    return derive


def run_enum_game(trials: int, dictionary_size: int, passphrase_space: int,
                  kdf_profile: KdfProfile, strategy=None,
                  seed: int | None = None) -> GameReport:
    """Real-or-random discovery id distinguishing game.

    Per trial the challenger flips a bit: on 1 it registers the target
    identifier under a passphrase drawn uniformly from `passphrase_space`
    words and the challenge id is the real registry key; on 0 the registry
    key is uniformly random. The strategy sees the registry view and the
    candidate identifier list, never the passphrase.
    """
    rng = random.Random(seed)
    ctx = _game_context()
    words = [f"pw-{i:05d}" for i in range(passphrase_space)]
    candidates = [f"user{i}@example.org" for i in range(dictionary_size)]
    target = candidates[0]
    if strategy is None:
        strategy = UniformGuesser(passphrase_space)
    derive = _derive_did_fn(ctx, kdf_profile.stage_a)
    record_owner = OwnerKey.generate()

    wins = 0
    with _kdf_memo():
        for _ in range(trials):
            registry = _game_registry()
            b = rng.getrandbits(1)
            if b == 1:
                word = words[rng.randrange(len(words))]
                did_bytes = derive(target, word)
            else:
                did_bytes = rng.randbytes(32)
            _insert_record(registry, DiscoveryId(did_bytes), record_owner,
                           rng.randbytes(32), rng.randbytes(32))
            view = EnumChallenge(
                challenge_did=did_bytes,
                target_identifier=target,
                candidate_identifiers=candidates,
                passphrase_words=words,
                derive_did=derive,
                rng=rng,
            )
            guess = strategy.play(view)
            if guess == b:
                wins += 1

    k_eff = min(strategy.budget, passphrase_space)
    baseline_rate = 0.5 * (1 + k_eff / passphrase_space)
    win_rate = wins / trials if trials else 0.0
    advantage = 2 * win_rate - 1
    return GameReport(
        game="enum",
        trials=trials,
        adversary_wins=wins,
        baseline=(f"guessing baseline win rate 0.5*(1+k/2^mu) = {baseline_rate:.4f} "
                  f"with k={k_eff}; each fresh guess costs one full "
                  f"memory-hard derivation (m={kdf_profile.stage_a.memory_kib} KiB)"),
        params={
            "dictionary_size": dictionary_size,
            "kdf_profile": kdf_profile.name,
            "mu_bits": passphrase_space.bit_length() - 1,
            "passphrase_space": passphrase_space,
            "strategy": strategy.name,
            "strategy_budget": strategy.budget,
        },
        extras={
            "advantage": round(advantage, 6),
            "baseline_win_rate": round(baseline_rate, 6),
            "win_rate": round(win_rate, 6),
        },
    )


# ---------------------------------------------------------------------------
# Mapping-integrity game
# ---------------------------------------------------------------------------

FORGERY_KINDS = (
    "random-signature",
    "bit-flipped-signature",
    "transplanted-signature",
    "stale-resubmit",
    "create-overwrite",
    "tombstone-forgery",
)


def run_map_game(trials: int, forgery_strategies: tuple[str, ...] = FORGERY_KINDS,
                 seed: int | None = None, mu_bits: int = 8,
                 kdf_profile: KdfProfile | None = None,
                 run_model_d_demo: bool = True) -> GameReport:
    """Unauthorized-mutation game against one victim slot.

    The victim registers and performs genuine updates; the adversary owns a
    separate slot (a source of valid-but-wrong signatures) and then fires
    `trials` forged state changes at the victim. A win is any accepted
    write, or any drift of the victim record, without the victim's key.
    """
    rng = random.Random(seed)
    registry = _game_registry()

    victim_did = DiscoveryId(rng.randbytes(32))
    victim = OwnerKey.generate()
    _insert_record(registry, victim_did, victim, rng.randbytes(32),
                   rng.randbytes(32))
    genuine: list[tuple[ContentId, int, object, bytes]] = []
    for ver in (2, 3):
        cid = ContentId(rng.randbytes(32))
        cmt = commit_bytes(rng.randbytes(64))
        sig = victim.sign(AuthMessage(victim_did, cid, ver, cmt).encode())
        registry.update(victim_did, cid, ver, cmt, sig)
        genuine.append((cid, ver, cmt, sig))

    adversary = OwnerKey.generate()
    adv_did = DiscoveryId(rng.randbytes(32))
    _insert_record(registry, adv_did, adversary, rng.randbytes(32),
                   rng.randbytes(32))
    adv_cid = ContentId(rng.randbytes(32))
    adv_cmt = commit_bytes(rng.randbytes(64))
    adv_sig = adversary.sign(AuthMessage(adv_did, adv_cid, 2, adv_cmt).encode())
    registry.update(adv_did, adv_cid, 2, adv_cmt, adv_sig)

    before = registry.lookup(victim_did)
    wins = 0
    rejected: dict[str, int] = {k: 0 for k in forgery_strategies}

    def attempt(kind: str) -> None:
        nonlocal wins
        current = registry.lookup(victim_did)
        fresh_ver = current.ver + 1
        try:
            if kind == "random-signature":
                registry.update(victim_did, ContentId(rng.randbytes(32)),
                                fresh_ver, commit_bytes(rng.randbytes(64)),
                                rng.randbytes(64))
            elif kind == "bit-flipped-signature":
                cid, ver, cmt, sig = genuine[-1]
                flipped = bytearray(sig)
                flipped[rng.randrange(len(flipped))] ^= 1 << rng.randrange(8)
                registry.update(victim_did, cid, fresh_ver, cmt, bytes(flipped))
            elif kind == "transplanted-signature":
                if rng.getrandbits(1):
                    # adversary's valid signature moved onto the victim slot
                    registry.update(victim_did, adv_cid, fresh_ver, adv_cmt,
                                    adv_sig)
                else:
                    # victim's valid signature moved onto different content
                    _, _, _, sig = genuine[-1]
                    registry.update(victim_did, ContentId(rng.randbytes(32)),
                                    fresh_ver, commit_bytes(rng.randbytes(64)),
                                    sig)
            elif kind == "stale-resubmit":
                cid, ver, cmt, sig = genuine[0]
                registry.update(victim_did, cid, ver, cmt, sig)
            elif kind == "create-overwrite":
                cid = ContentId(rng.randbytes(32))
                cmt = commit_bytes(rng.randbytes(64))
                msg = AuthMessage(victim_did, cid, 1, cmt)
                registry.initialize(victim_did, RegistryRecord(
                    cid=cid, ver=1, commit=cmt,
                    pk_owner=adversary.public_bytes, sig_alg=adversary.sig_alg,
                    auth=AuthProof(AuthKind.SIGNATURE_B,
                                   adversary.sign(msg.encode()))))
            elif kind == "tombstone-forgery":
                sig_src = rng.getrandbits(1)
                msg = encode_tombstone_message(victim_did, fresh_ver, None)
                sig = adversary.sign(msg) if sig_src else rng.randbytes(64)
                registry.tombstone(victim_did, None, sig)
            else:
                raise ValueError(f"unknown forgery kind {kind!r}")
        except (BadAuth, StaleVersion, SlotOccupied, Tombstoned,
                AlreadyTombstoned):
            rejected[kind] += 1
            return
        wins += 1

    for i in range(trials):
        attempt(forgery_strategies[i % len(forgery_strategies)])

    after = registry.lookup(victim_did)
    drifted = (after.cid.bytes != before.cid.bytes or after.ver != before.ver
               or after.commit.bytes != before.commit.bytes
               or after.state is not before.state)
    if drifted:
        wins = max(wins, 1)

    extras: dict = {f"rejected.{k}": v for k, v in rejected.items()}
    extras["victim_record_intact"] = not drifted
    extras["front_running_exposed"] = _front_running_probe(rng)
    if run_model_d_demo:
        profile = kdf_profile or keyschedule.get_profile("dev")
        extras["model_d_exhaustive_guess_wins"] = _model_d_probe(
            rng, mu_bits, profile)
        extras["model_d_mu_bits"] = mu_bits

    return GameReport(
        game="map",
        trials=trials,
        adversary_wins=wins,
        baseline=("EUF-CMA signature forgery; expected accepted writes: 0 "
                  "(model D adds a passphrase-guessing term, demonstrated "
                  "separately)"),
        params={"forgery_strategies": list(forgery_strategies),
                "victim_versions": 3},
        extras=extras,
    )


def _front_running_probe(rng: random.Random, races: int = 10) -> int:
    """Adversary initializes a victim's still-empty slot first.

    Initialize-if-empty makes the loss visible (the victim gets a clean
    occupied-slot failure rather than silent corruption), but the slot is
    the adversary's. Reported as exposure, not counted as a forgery win:
    the integrity game grants the victim first registration.
    """
    exposed = 0
    for _ in range(races):
        registry = _game_registry()
        did = DiscoveryId(rng.randbytes(32))
        adversary = OwnerKey.generate()
        _insert_record(registry, did, adversary, rng.randbytes(32),
                       rng.randbytes(32))
        victim = OwnerKey.generate()
        try:
            _insert_record(registry, did, victim, rng.randbytes(32),
                           rng.randbytes(32))
        except SlotOccupied:
            exposed += 1
    return exposed


def _model_d_probe(rng: random.Random, mu_bits: int,
                   profile: KdfProfile) -> int:
    """Derived-owner-key degradation demo: exhaustive passphrase search.

    With the owner key derived from the passphrase and only 2^mu equally
    likely passphrases, recovering the signing key is a guessing exercise;
    the forged update is then accepted legitimately. Expected value: 1.
    """
    ctx = _game_context()
    registry = _game_registry()
    words = [f"pw-{i:05d}" for i in range(1 << mu_bits)]
    target = "victim@example.org"
    ident = normalize(target)
    salt = derive_lookup_salt(ident)

    def stage_a(word: str):
        pw = Passphrase.from_text(word)
        root = derive_lookup_root(pw, salt, profile.stage_a)
        pw.wipe()
        return root

    with _kdf_memo():
        secret_word = words[rng.randrange(len(words))]
        root = stage_a(secret_word)
        k_idx = derive_domain_key(root, Domain.INDEX)
        did = discovery_id(k_idx, ctx, ident)
        owner = OwnerKey.derive(root)
        _insert_record(registry, did, owner, rng.randbytes(32),
                       rng.randbytes(32))
        root.wipe()
        k_idx.wipe()

        record = registry.lookup(did)
        wins = 0
        for word in words:
            guess_root = stage_a(word)
            guess_owner = OwnerKey.derive(guess_root)
            guess_root.wipe()
            if guess_owner.public_bytes != record.pk_owner:
                continue
            cid = ContentId(rng.randbytes(32))
            cmt = commit_bytes(rng.randbytes(64))
            sig = guess_owner.sign(
                AuthMessage(did, cid, record.ver + 1, cmt).encode())
            try:
                registry.update(did, cid, record.ver + 1, cmt, sig)
                wins = 1
            except (BadAuth, StaleVersion):
                pass
            break
    return wins


# ---------------------------------------------------------------------------
# Rollback game
# ---------------------------------------------------------------------------

class _RecordingRegistry:
    """Registry proxy logging accepted mutations — the public ledger history
    an adversary replays from."""

    def __init__(self, inner: Registry):
        self._inner = inner
        self.identity = inner.identity
        self.updates: list[tuple[DiscoveryId, ContentId, int, object, bytes]] = []

    def initialize(self, did, record) -> None:
        self._inner.initialize(did, record)

    def update(self, did, cid, ver, cmt, sig) -> None:
        self._inner.update(did, cid, ver, cmt, sig)
        self.updates.append((did, cid, ver, cmt, sig))

    def tombstone(self, did, redirect, sig) -> None:
        self._inner.tombstone(did, redirect, sig)

    def lookup(self, did):
        return self._inner.lookup(did)


def run_roll_game(trials: int, chain_len_range: tuple[int, int] = (5, 10),
                  kdf_profile: KdfProfile | None = None,
                  seed: int | None = None,
                  stale_view_every: int = 5) -> GameReport:
    """Stale-replay and substitution game over real version chains.

    Per trial a slot is driven through a chain of genuine updates; the
    adversary then replays every captured stale write and serves
    substituted storage bytes. A win is any accepted stale write, or a
    recovery that completes on non-latest content under a fresh registry
    view. Every `stale_view_every`-th trial also recovers against a
    deliberately stale registry snapshot, counting (expected, flagged)
    old-version acceptances separately.
    """
    rng = random.Random(seed)
    profile = kdf_profile or keyschedule.get_profile("dev")
    binding = _game_binding(profile.name)

    wins = 0
    replay_rejected = 0
    tamper_detected = 0
    tamper_routed_around = 0
    stale_view_accepts = 0
    stale_view_runs = 0

    with _kdf_memo():
        for t in range(trials):
            backend = MemoryBackend()
            registry = _RecordingRegistry(_game_registry())
            config = FlowConfig(
                binding=binding, kdf_profile=profile,
                owner_key_model=OwnerKeyModel.RANDOM_KEY,
                storage_backends=[backend], registry=registry,
                owner_key_store=MemoryOwnerKeyStore(),
            )
            identifier = f"user{t}@example.org"
            word = f"pw-{rng.randrange(1 << 16):05d}"
            rev_bytes = rng.randbytes(32)

            did, cid1, _ = register(identifier, Passphrase.from_text(word),
                                    RootEntityValue(rev_bytes), config)
            # version-1 view, genuinely stale once the chain grows past it
            stale_snapshot = Registry.from_snapshot(
                registry._inner.to_snapshot())
            chain_len = rng.randint(*chain_len_range)
            blobs = {1: backend.get(cid1)}
            for _ in range(chain_len - 1):
                _, ver = update_backup(identifier, Passphrase.from_text(word),
                                       Passphrase.from_text(word),
                                       RootEntityValue(rev_bytes), config)
                blobs[ver] = backend.get(registry.lookup(did).cid)
            latest_ver = registry.lookup(did).ver

            # replay every superseded accepted write
            for rdid, rcid, rver, rcmt, rsig in registry.updates:
                if rver >= latest_ver:
                    continue
                try:
                    registry.update(rdid, rcid, rver, rcmt, rsig)
                    wins += 1
                except StaleVersion:
                    replay_rejected += 1

            # substituted storage: previous-version blob served for latest cid
            stale_blob = blobs[latest_ver - 1]
            evil_only = FlowConfig(
                binding=binding, kdf_profile=profile,
                owner_key_model=OwnerKeyModel.RANDOM_KEY,
                storage_backends=[TamperingBackend(backend,
                                                   substitute=stale_blob)],
                registry=registry, owner_key_store=config.owner_key_store,
            )
            try:
                recover(identifier, Passphrase.from_text(word), evil_only)
                wins += 1
            except (StorageUnavailable, AllBackendsFailed):
                tamper_detected += 1

            # same adversary plus one honest replica: recovery must succeed
            # on the latest content
            evil_plus_honest = FlowConfig(
                binding=binding, kdf_profile=profile,
                owner_key_model=OwnerKeyModel.RANDOM_KEY,
                storage_backends=[TamperingBackend(backend,
                                                   substitute=stale_blob),
                                  backend],
                registry=registry, owner_key_store=config.owner_key_store,
            )
            outcome = recover(identifier, Passphrase.from_text(word),
                              evil_plus_honest)
            if outcome.record_ver != latest_ver or outcome.rev.bytes != rev_bytes:
                wins += 1
            else:
                tamper_routed_around += 1
            outcome.rev.wipe()

            # deliberate freshness violation: recover against an old snapshot
            if latest_ver > 1 and t % stale_view_every == 0:
                stale_view_runs += 1
                stale_config = FlowConfig(
                    binding=binding, kdf_profile=profile,
                    owner_key_model=OwnerKeyModel.RANDOM_KEY,
                    storage_backends=[backend], registry=stale_snapshot,
                    owner_key_store=config.owner_key_store,
                )
                stale_outcome = recover(identifier, Passphrase.from_text(word),
                                        stale_config)
                if stale_outcome.record_ver < latest_ver:
                    stale_view_accepts += 1
                stale_outcome.rev.wipe()

    return GameReport(
        game="roll",
        trials=trials,
        adversary_wins=wins,
        baseline=("expected wins 0 under fresh reads: stale writes rejected "
                  "by version monotonicity, substituted bytes by content-id "
                  "and commitment checks; stale-view acceptances quantify "
                  "the freshness-assumption term"),
        params={
            "chain_len_range": list(chain_len_range),
            "kdf_profile": profile.name,
            "stale_view_every": stale_view_every,
        },
        extras={
            "replay_rejected": replay_rejected,
            "stale_view_accepts": stale_view_accepts,
            "stale_view_runs": stale_view_runs,
            "tamper_detected": tamper_detected,
            "tamper_routed_around": tamper_routed_around,
        },
    )
