"""Paillier cryptosystem with threshold decryption (PCTD).

Each user holds a discrete-log key pair ``pk = g^sk mod N^2`` over shared
public parameters ``(g, N)``.  Ciphertexts are pairs ``(C1, C2)`` and can be
opened three ways: with the user secret key (weak decryption), with the
master key ``lambda`` (strong decryption), or jointly by two servers holding
additive shares of ``lambda`` (partial decryption 1 + 2).

All randomised functions take an ``rng`` exposing ``randrange`` and
``getrandbits`` (``random.Random`` for reproducible runs,
``secrets.SystemRandom`` otherwise).
"""
from __future__ import annotations

import math
import secrets
from dataclasses import dataclass, field
from enum import Enum

import gmpy2

from . import codec

# Below this modulus size the standard L(N)/8 operand bound is too small to be
# useful, so toy keys trade blinding width for operand range.
FULL_BOUNDS_MIN_BITS = 256

_SMALL_PRIMES = [p for p in range(3, 2000) if all(p % d for d in range(2, int(p ** 0.5) + 1))]


class PCTDError(Exception):
    pass


class DomainError(PCTDError, ValueError):
    """Plaintext outside Z_N or an otherwise inadmissible operand."""


class WrongKeyError(PCTDError):
    """Decryption produced a non-integral L(x): the key does not fit."""


class KeyMismatchError(PCTDError):
    """Homomorphic combination of ciphertexts under different public keys."""


def default_rng():
    return secrets.SystemRandom()


class Role(str, Enum):
    CP = "CP"
    CSP = "CSP"


@dataclass(frozen=True)
class PublicParams:
    n: int
    g: int
    kappa: int
    nsquare: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nsquare", self.n * self.n)

    @property
    def bits(self) -> int:
        """L(N), the bit length of the modulus."""
        return self.n.bit_length()

    @property
    def operand_bits(self) -> int:
        """Exclusive bit bound on values fed to the comparison protocols.

        Full-size keys use L(N)/8.  Toy keys (L(N) < 256) widen the operand
        range to L(N)/2 - 10 and shrink the blinding randoms instead; see
        ``protocols.comparison_bounds``.
        """
        if self.bits >= FULL_BOUNDS_MIN_BITS:
            return self.bits // 8
        return self.bits // 2 - 10


@dataclass(frozen=True)
class MasterKey:
    lam: int


@dataclass(frozen=True)
class PartialKeyShare:
    share: int
    role: Role


@dataclass(frozen=True)
class UserKeyPair:
    sk: int
    pk: int


@dataclass(frozen=True)
class Ciphertext:
    c1: int
    c2: int
    pk: int = field(repr=False)
    pp: PublicParams = field(repr=False, compare=False)

    def __add__(self, other: "Ciphertext") -> "Ciphertext":
        return hom_add(self, other)

    def __mul__(self, scalar: int) -> "Ciphertext":
        return hom_scale(self, scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Ciphertext":
        return hom_scale(self, self.pp.n - 1)

    def __sub__(self, other: "Ciphertext") -> "Ciphertext":
        return hom_add(self, -other)

    def to_bytes(self) -> bytes:
        return codec.pack_ints((self.c1, self.c2))

    @classmethod
    def from_bytes(cls, pp: PublicParams, pk: int, raw: bytes) -> "Ciphertext":
        c1, c2 = codec.unpack_ints(raw, 2)
        return cls(c1, c2, pk, pp)


# -- key generation ---------------------------------------------------------

def _passes_sieve(x) -> bool:
    return all(x % p for p in _SMALL_PRIMES if p < x)


def _safe_prime(bits: int, rng) -> tuple[int, int]:
    """Return ``(p, p')`` with ``p = 2p' + 1``, both prime, top two bits of p set."""
    while True:
        half = rng.getrandbits(bits - 1) | (3 << (bits - 3)) | 1
        half = gmpy2.mpz(half)
        p = 2 * half + 1
        if half % 3 != 2:  # otherwise 3 divides half or p
            continue
        if not (_passes_sieve(half) and _passes_sieve(p)):
            continue
        if gmpy2.is_prime(half, 30) and gmpy2.is_prime(p, 30):
            return int(p), int(half)


def keygen(kappa: int, rng=None):
    """Generate ``(PublicParams, MasterKey, (p, q))`` with κ-bit safe primes.

    Safe primes make ``(p-1)(q-1)/2 == lcm(p-1, q-1)``, so the generator
    ``g = -a^(2N)`` has exactly the order the scheme asks for, which is
    verified here with the factorisation in hand.
    """
    if kappa < 16:
        raise DomainError("kappa must be at least 16 bits")
    rng = rng or default_rng()
    while True:
        p, p1 = _safe_prime(kappa, rng)
        q, q1 = _safe_prime(kappa, rng)
        if p != q:
            break
    n = p * q
    nsq = n * n
    lam = (p - 1) * (q - 1) // math.gcd(p - 1, q - 1)
    order = (p - 1) * (q - 1) // 2
    assert lam == order == 2 * p1 * q1
    while True:
        a = rng.randrange(2, nsq)
        if math.gcd(a, n) != 1:
            continue
        g = (-pow(a, 2 * n, nsq)) % nsq
        if pow(g, order, nsq) != 1:
            continue
        if any(pow(g, order // f, nsq) == 1 for f in (2, p1, q1)):
            continue
        break
    return PublicParams(n, int(g), kappa), MasterKey(lam), (p, q)


def split_master(pp: PublicParams, master: MasterKey, rng=None):
    """Split λ into (λ1, λ2) with λ1+λ2 ≡ 0 (mod λ) and ≡ 1 (mod N²)."""
    rng = rng or default_rng()
    lam, nsq = master.lam, pp.nsquare
    modulus = lam * nsq
    target = lam * int(gmpy2.invert(lam, nsq))  # CRT: 0 mod λ, 1 mod N²
    lam1 = rng.randrange(modulus)
    lam2 = (target - lam1) % modulus
    return PartialKeyShare(lam1, Role.CP), PartialKeyShare(lam2, Role.CSP)


def user_keypair(pp: PublicParams, rng=None) -> UserKeyPair:
    rng = rng or default_rng()
    sk = rng.randrange(1, pp.n)
    return UserKeyPair(sk, int(gmpy2.powmod(pp.g, sk, pp.nsquare)))


# -- encryption / decryption -----------------------------------------------

def _check_plaintext(pp: PublicParams, m: int) -> None:
    if not 0 <= m < pp.n:
        raise DomainError(f"plaintext must lie in [0, N); got {m}")


def encrypt(pp: PublicParams, pk: int, m: int, rng=None) -> Ciphertext:
    _check_plaintext(pp, m)
    rng = rng or default_rng()
    nsq = pp.nsquare
    r = rng.randrange(1, pp.n)
    c1 = gmpy2.powmod(pk, r, nsq) * (1 + m * pp.n) % nsq
    c2 = gmpy2.powmod(pp.g, r, nsq)
    return Ciphertext(int(c1), int(c2), pk, pp)


def _L(pp: PublicParams, x: int) -> int:
    q, rem = divmod(int(x) - 1, pp.n)
    if rem:
        raise WrongKeyError("L(x) is not integral; wrong key or corrupted ciphertext")
    return q


def weak_decrypt(pp: PublicParams, sk: int, ct: Ciphertext) -> int:
    nsq = pp.nsquare
    mask = gmpy2.powmod(ct.c2, sk, nsq)
    x = ct.c1 * gmpy2.invert(mask, nsq) % nsq
    return _L(pp, x)


def strong_decrypt(pp: PublicParams, master: MasterKey, ct: Ciphertext) -> int:
    x = gmpy2.powmod(ct.c1, master.lam, pp.nsquare)
    return _L(pp, x) * int(gmpy2.invert(master.lam, pp.n)) % pp.n


def partial_decrypt_1(pp: PublicParams, share: PartialKeyShare, ct: Ciphertext) -> int:
    return int(gmpy2.powmod(ct.c1, share.share, pp.nsquare))


def partial_decrypt_2(pp: PublicParams, share: PartialKeyShare, ct: Ciphertext,
                      partial: int) -> int:
    own = gmpy2.powmod(ct.c1, share.share, pp.nsquare)
    return _L(pp, own * partial % pp.nsquare)


def refresh(pp: PublicParams, ct: Ciphertext, rng=None) -> Ciphertext:
    rng = rng or default_rng()
    nsq = pp.nsquare
    r = rng.randrange(1, pp.n)
    c1 = ct.c1 * gmpy2.powmod(ct.pk, r, nsq) % nsq
    c2 = ct.c2 * gmpy2.powmod(pp.g, r, nsq) % nsq
    return Ciphertext(int(c1), int(c2), ct.pk, pp)


# -- homomorphisms ----------------------------------------------------------

def hom_add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    if a.pk != b.pk:
        raise KeyMismatchError("cannot add ciphertexts under different public keys")
    nsq = a.pp.nsquare
    return Ciphertext(a.c1 * b.c1 % nsq, a.c2 * b.c2 % nsq, a.pk, a.pp)


def hom_scale(ct: Ciphertext, r: int) -> Ciphertext:
    """Encryption of ``r*m mod N``; negative r is taken modulo N."""
    pp = ct.pp
    r %= pp.n
    nsq = pp.nsquare
    return Ciphertext(int(gmpy2.powmod(ct.c1, r, nsq)),
                      int(gmpy2.powmod(ct.c2, r, nsq)), ct.pk, pp)


# -- signed interpretation of Z_N ------------------------------------------

def encode_signed(pp: PublicParams, v: int) -> int:
    if abs(v) >= 1 << pp.operand_bits:
        raise DomainError(f"|{v}| exceeds the signed range 2^{pp.operand_bits}")
    return v % pp.n


def decode_signed(pp: PublicParams, raw: int) -> int:
    bound = 1 << pp.operand_bits
    if raw < bound:
        return raw
    if raw > pp.n - bound:
        return raw - pp.n
    raise DomainError("residue is outside the small signed range")
