"""Standards-inspired burst synthesis at 20 MHz complex baseband.

Four WiFi-like families plus a noise class. Each family keeps the physical
hooks a detector or classifier would key on (Barker-spread DSSS preamble,
legacy OFDM training fields, format-specific signal fields, distinct tone
grids and symbol durations) without implementing coding or scrambling of
payload data. Payload content is random 16-QAM / DQPSK; per-PPDU data-symbol
counts are sized from the target burst length, emulating the effect of the
two coding rates used per family.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dsp import frequency_shift, rational_resample
from .errors import InsufficientSamples, InvalidLabel, InvalidSpec
from .signals import ComplexSignal, mean_power, power_normalize

SAMPLE_RATE_HZ = 20e6
CHANNEL_BANDWIDTH_HZ = 20e6


class Protocol(enum.Enum):
    B80211 = "802.11b"
    G80211 = "802.11g"
    N80211 = "802.11n"
    AX80211 = "802.11ax"
    NOISE = "noise"

    @property
    def label(self) -> str:
        return self.value


# canonical class ordering for model heads, logs, and confusion matrices
PROTOCOL_ORDER = [Protocol.B80211, Protocol.G80211, Protocol.N80211, Protocol.AX80211]
PROTOCOL_ORDER_WITH_NOISE = PROTOCOL_ORDER + [Protocol.NOISE]


_SHORT_NAMES = {"b": Protocol.B80211, "g": Protocol.G80211,
                "n": Protocol.N80211, "ax": Protocol.AX80211}


def parse_protocol(name: str) -> Protocol:
    if name in _SHORT_NAMES:
        return _SHORT_NAMES[name]
    for proto in Protocol:
        if name in (proto.value, proto.name, proto.name.lower()):
            return proto
    raise InvalidLabel(f"unknown protocol {name!r}")


# Default whole-burst lengths at 20 MHz and PPDU counts per burst. Lengths are
# contractual; data-symbol counts per PPDU are derived from them below.
DEFAULT_TARGET_LEN = {
    Protocol.B80211: 18112,
    Protocol.G80211: 32960,
    Protocol.N80211: 31340,
    Protocol.AX80211: 31640,
    Protocol.NOISE: 18112,
}
DEFAULT_PPDUS = {
    Protocol.B80211: 1,
    Protocol.G80211: 8,
    Protocol.N80211: 11,
    Protocol.AX80211: 11,
    Protocol.NOISE: 1,
}


@dataclass(frozen=True)
class BurstSpec:
    """What to synthesize: family, payload floor, framing, and length target.

    target_len_samples=None lets the burst take its natural length from
    payload_bits; an explicit target sizes the data fields to land on it
    (residual under one OFDM symbol is zero-padded or trimmed).
    """

    protocol: Protocol
    payload_bits: int = 1000
    ppdus_per_burst: int | None = None
    target_len_samples: int | None = 0  # 0 means "protocol default"

    def __post_init__(self):
        if not isinstance(self.protocol, Protocol):
            raise InvalidSpec(f"protocol must be a Protocol, got {self.protocol!r}")
        if self.payload_bits < 8:
            raise InvalidSpec(f"payload_bits must be >= 8, got {self.payload_bits}")
        ppdus = self.ppdus_per_burst
        if ppdus is None:
            ppdus = DEFAULT_PPDUS[self.protocol]
            object.__setattr__(self, "ppdus_per_burst", ppdus)
        if ppdus < 1:
            raise InvalidSpec(f"ppdus_per_burst must be >= 1, got {ppdus}")
        if self.target_len_samples == 0:
            object.__setattr__(self, "target_len_samples", DEFAULT_TARGET_LEN[self.protocol])
        if self.target_len_samples is not None and self.target_len_samples < 64:
            raise InvalidSpec(f"target_len_samples too small: {self.target_len_samples}")


# ---------------------------------------------------------------------------
# DSSS (11b-like) building blocks, chip rate 11 MHz
# ---------------------------------------------------------------------------

BARKER11 = np.array([1, -1, 1, 1, -1, 1, 1, 1, -1, -1, -1], dtype=np.float64)
_CHIP_RATE_HZ = 11e6
_SFD_BITS = [1, 1, 1, 1, 0, 0, 1, 1, 1, 0, 1, 0, 0, 0, 0, 0]  # 0xF3A0, msb first


def _scramble(bits: np.ndarray, register: int = 0b1101100) -> np.ndarray:
    """Self-synchronizing scrambler, polynomial z^-7 + z^-4 + 1."""
    state = [(register >> i) & 1 for i in range(7)]  # state[0] is newest
    out = np.empty_like(bits)
    for i, b in enumerate(bits):
        fb = state[3] ^ state[6]
        s = int(b) ^ fb
        out[i] = s
        state = [s] + state[:-1]
    return out


def _dbpsk_phases(bits: np.ndarray) -> np.ndarray:
    # bit 1 flips the carrier phase, bit 0 holds it
    flips = np.where(bits > 0, -1.0, 1.0)
    return np.cumprod(flips)


def _dqpsk_phases(bits: np.ndarray) -> np.ndarray:
    # Gray-coded dibits -> phase increments {0, pi/2, pi, 3pi/2}
    if bits.size % 2:
        bits = np.append(bits, 0)
    dibits = bits[0::2] * 2 + bits[1::2]
    inc = np.array([0.0, np.pi / 2, 3 * np.pi / 2, np.pi])[dibits]
    return np.exp(1j * np.cumsum(inc))


def _spread(symbols: np.ndarray) -> np.ndarray:
    """One Barker-11 sequence per symbol at 11 Mchip/s."""
    return (symbols[:, None] * BARKER11[None, :]).reshape(-1).astype(np.complex128)


def dsss_preamble_chips() -> np.ndarray:
    """Long-preamble chip sequence: 128 scrambled ones plus the 16-bit start
    delimiter, DBPSK at 1 Msym/s. Deterministic."""
    bits = _scramble(np.array([1] * 128 + _SFD_BITS, dtype=np.int64))
    return _spread(_dbpsk_phases(bits))


def dsss_preamble() -> ComplexSignal:
    """The stage-one correlation template: long preamble resampled to 20 MHz."""
    chips = ComplexSignal(dsss_preamble_chips(), _CHIP_RATE_HZ)
    return power_normalize(rational_resample(chips, 20, 11))


def _dsss_header_chips() -> np.ndarray:
    # 48-bit PLCP-style header (signal/service/length/crc emulated as fixed
    # plus a length-dependent field), DQPSK at 1 Msym/s
    bits = np.array(
        [0, 1, 1, 0, 1, 1, 1, 0] + [0] * 8 + [int(b) for b in f"{1000:016b}"] + [1, 0] * 8,
        dtype=np.int64,
    )
    return _spread(_dqpsk_phases(_scramble(bits)))


def _generate_dsss_burst(spec: BurstSpec, rng: np.random.Generator) -> np.ndarray:
    preamble = dsss_preamble_chips()
    header = _dsss_header_chips()
    fixed_chips = preamble.size + header.size

    if spec.target_len_samples is None:
        n_payload_syms = -(-spec.payload_bits // 2)
    else:
        chips_budget = (spec.target_len_samples * 11) // 20
        n_payload_syms = (chips_budget - fixed_chips) // 11
        n_payload_syms = max(n_payload_syms, -(-spec.payload_bits // 2))
    if n_payload_syms < 1:
        raise InvalidSpec("target too short for the DSSS preamble and header")

    bits = rng.integers(0, 2, size=2 * n_payload_syms)
    payload = _spread(_dqpsk_phases(bits))
    ppdu = np.concatenate([preamble, header, payload])
    chips = np.tile(ppdu, spec.ppdus_per_burst) if spec.ppdus_per_burst > 1 else ppdu
    sig = rational_resample(ComplexSignal(chips, _CHIP_RATE_HZ), 20, 11)
    return sig.samples


# ---------------------------------------------------------------------------
# OFDM building blocks
# ---------------------------------------------------------------------------

_QAM16 = (
    np.array([x + 1j * y for x in (-3, -1, 3, 1) for y in (-3, -1, 3, 1)], dtype=np.complex128)
    / np.sqrt(10.0)
)

# 64-point legacy/HT grids
_NONHT_PILOTS = np.array([-21, -7, 7, 21])
_NONHT_DATA = np.array([k for k in range(-26, 27) if k != 0 and k not in (-21, -7, 7, 21)])
_HT_DATA = np.array([k for k in range(-28, 29) if k != 0 and k not in (-21, -7, 7, 21)])

# 256-point dense grid: 242 active tones, 8 pilots
_HE_PILOTS = np.array([-116, -90, -48, -22, 22, 48, 90, 116])
_HE_ACTIVE = np.array([k for k in range(-122, 123) if abs(k) >= 2])
_HE_DATA = np.array([k for k in _HE_ACTIVE if k not in set(_HE_PILOTS)])

# Standard short-training tone values on the 64 grid (12 tones, +-4..+-24).
_STS_TONES = {
    -24: 1 + 1j, -20: -1 - 1j, -16: 1 + 1j, -12: -1 - 1j, -8: -1 - 1j, -4: 1 + 1j,
    4: -1 - 1j, 8: -1 - 1j, 12: 1 + 1j, 16: 1 + 1j, 20: 1 + 1j, 24: 1 + 1j,
}
# Standard long-training BPSK values on tones -26..26 (0 at DC).
_LTS_VALUES = np.array(
    [1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1]
    + [0]
    + [1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1],
    dtype=np.float64,
)


def _time_symbol(grid: np.ndarray, nfft: int, cp: int) -> np.ndarray:
    """IFFT the tone grid, scale to unit mean power, prepend the cyclic prefix."""
    x = np.fft.ifft(np.fft.ifftshift(grid))
    n_active = np.count_nonzero(grid)
    x *= nfft / np.sqrt(n_active)
    return np.concatenate([x[-cp:], x]) if cp else x


def _grid64(tone_values: dict[int, complex]) -> np.ndarray:
    grid = np.zeros(64, dtype=np.complex128)
    for k, v in tone_values.items():
        grid[k + 32] = v
    return grid


def short_training_field() -> np.ndarray:
    """Ten repetitions of the 16-sample short symbol (160 samples)."""
    sym = _time_symbol(_grid64(_STS_TONES), 64, 0)
    stf = np.tile(sym[:16], 10)
    return stf / np.sqrt(np.mean(np.abs(stf) ** 2))


def long_training_field() -> np.ndarray:
    """Half-symbol guard plus two long symbols (160 samples)."""
    grid = np.zeros(64, dtype=np.complex128)
    grid[32 - 26 : 32 + 27] = _LTS_VALUES
    sym = _time_symbol(grid, 64, 0)
    ltf = np.concatenate([sym[-32:], sym, sym])
    return ltf / np.sqrt(np.mean(np.abs(ltf) ** 2))


def legacy_training_fields() -> np.ndarray:
    """STF + LTF, the 320-sample head shared by every OFDM family here."""
    return np.concatenate([short_training_field(), long_training_field()])


def _bpsk_signal_symbol(bits: np.ndarray, rotate: bool = False, pilot_sign: float = 1.0) -> np.ndarray:
    """One signaling symbol: BPSK bits on the 48 NonHT data tones, CP 16."""
    values = np.repeat(2.0 * bits.astype(np.float64) - 1.0, -(-48 // bits.size))[:48]
    grid = np.zeros(64, dtype=np.complex128)
    grid[_NONHT_DATA + 32] = values * (1j if rotate else 1.0)
    grid[_NONHT_PILOTS + 32] = pilot_sign
    return _time_symbol(grid, 64, 16)


def _lsig_bits(protocol: Protocol) -> np.ndarray:
    # rate nibble + reserved + 12-bit length proxy + parity + tail; the length
    # proxy differs per family so signaling heads are not bit-identical
    rate = {Protocol.G80211: [1, 1, 0, 1], Protocol.N80211: [1, 0, 1, 1], Protocol.AX80211: [1, 0, 1, 1]}
    length = {Protocol.G80211: 1350, Protocol.N80211: 2925, Protocol.AX80211: 3273}[protocol]
    length_bits = [int(b) for b in f"{length:012b}"]
    parity = [sum(rate[protocol] + length_bits) % 2]
    return np.array(rate[protocol] + [0] + length_bits + parity + [0] * 6, dtype=np.int64)


def _ht_signal_symbols() -> np.ndarray:
    # two 90-degree-rotated BPSK symbols carrying fixed MCS/length bits
    bits = np.array([int(b) for b in f"{0x3A5C9:024b}" * 2], dtype=np.int64)
    return np.concatenate(
        [_bpsk_signal_symbol(bits[:24], rotate=True), _bpsk_signal_symbol(bits[24:], rotate=True)]
    )


def _he_siga_symbols() -> np.ndarray:
    bits = np.array([int(b) for b in f"{0x5D31_7B2A6:036b}" + "011011001101"], dtype=np.int64)
    return np.concatenate([_bpsk_signal_symbol(bits[:24]), _bpsk_signal_symbol(bits[24:])])


def _he_ltf_symbol() -> np.ndarray:
    # 4x-duration training symbol on the dense grid; fixed BPSK sequence
    seq_rng = np.random.Generator(np.random.PCG64(0x11AE))
    grid = np.zeros(256, dtype=np.complex128)
    grid[_HE_ACTIVE + 128] = 2.0 * seq_rng.integers(0, 2, size=_HE_ACTIVE.size) - 1.0
    return _time_symbol(grid, 256, 16)


def nonht_signal_fields() -> np.ndarray:
    """Post-training block of the plain legacy format: just its signaling
    symbol. Short, so it is the least noise-robust detection template."""
    return _bpsk_signal_symbol(_lsig_bits(Protocol.G80211))


def ht_signal_fields() -> np.ndarray:
    """Post-legacy training block unique to the mid-generation family:
    rotated signaling symbols, short retrain, one long training symbol."""
    stf = short_training_field()[:80]
    grid = np.zeros(64, dtype=np.complex128)
    grid[32 - 26 : 32 + 27] = _LTS_VALUES
    grid[[32 - 28, 32 - 27, 32 + 27, 32 + 28]] = 1.0
    ht_ltf = _time_symbol(grid, 64, 16)
    return np.concatenate([_ht_signal_symbols(), stf, ht_ltf])


def he_signal_fields() -> np.ndarray:
    """Post-legacy block for the dense-grid family: repeated legacy signaling
    symbol, two-symbol header, short retrain, 4x-duration training symbol."""
    rlsig = _bpsk_signal_symbol(_lsig_bits(Protocol.AX80211))
    stf = short_training_field()[:80]
    return np.concatenate([rlsig, _he_siga_symbols(), stf, _he_ltf_symbol()])


def _qam_data_symbols(n_syms: int, nfft: int, cp: int, data_tones: np.ndarray,
                      pilot_tones: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """n_syms OFDM data symbols of random 16-QAM with alternating pilots."""
    out = np.empty(n_syms * (nfft + cp), dtype=np.complex128)
    sym_len = nfft + cp
    for i in range(n_syms):
        grid = np.zeros(nfft, dtype=np.complex128)
        grid[data_tones + nfft // 2] = _QAM16[rng.integers(0, 16, size=data_tones.size)]
        grid[pilot_tones + nfft // 2] = 1.0 if i % 2 == 0 else -1.0
        out[i * sym_len : (i + 1) * sym_len] = _time_symbol(grid, nfft, cp)
    return out


_OFDM_LAYOUT = {
    # protocol -> (nfft, cp, data tones, pilot tones, per-PPDU head builder)
    Protocol.G80211: (64, 16, _NONHT_DATA, _NONHT_PILOTS, lambda: np.array([], dtype=np.complex128)),
    Protocol.N80211: (64, 16, _HT_DATA, _NONHT_PILOTS, ht_signal_fields),
    Protocol.AX80211: (256, 32, _HE_DATA, _HE_PILOTS, he_signal_fields),
}


def _distribute(total: int, bins: int) -> list[int]:
    base, rem = divmod(total, bins)
    return [base + 1 if i < rem else base for i in range(bins)]


def _generate_ofdm_burst(spec: BurstSpec, rng: np.random.Generator) -> np.ndarray:
    nfft, cp, data_tones, pilot_tones, extra_head = _OFDM_LAYOUT[spec.protocol]
    sym_len = nfft + cp
    head = np.concatenate(
        [legacy_training_fields(), _bpsk_signal_symbol(_lsig_bits(spec.protocol)), extra_head()]
    )
    ppdus = spec.ppdus_per_burst
    bits_per_sym = 4 * data_tones.size

    if spec.target_len_samples is None:
        per_ppdu = [-(-spec.payload_bits // bits_per_sym)] * ppdus
    else:
        budget = spec.target_len_samples - ppdus * head.size
        if budget < ppdus * sym_len:
            raise InvalidSpec(
                f"target {spec.target_len_samples} cannot fit {ppdus} PPDUs of {spec.protocol.label}"
            )
        per_ppdu = _distribute(max(round(budget / sym_len), ppdus), ppdus)

    parts = []
    for n_syms in per_ppdu:
        parts.append(head)
        parts.append(_qam_data_symbols(n_syms, nfft, cp, data_tones, pilot_tones, rng))
    return np.concatenate(parts)


def _fit_length(samples: np.ndarray, target: int | None) -> np.ndarray:
    if target is None or samples.size == target:
        return samples
    if samples.size > target:
        return samples[:target]
    return np.concatenate([samples, np.zeros(target - samples.size, dtype=samples.dtype)])


def generate_burst(spec: BurstSpec, rng: np.random.Generator) -> ComplexSignal:
    """Synthesize one burst at 20 MHz, unit mean power, exact target length."""
    if spec.protocol is Protocol.NOISE:
        n = spec.target_len_samples or DEFAULT_TARGET_LEN[Protocol.NOISE]
        samples = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    elif spec.protocol is Protocol.B80211:
        samples = _fit_length(_generate_dsss_burst(spec, rng), spec.target_len_samples)
    else:
        samples = _fit_length(_generate_ofdm_burst(spec, rng), spec.target_len_samples)
    return power_normalize(ComplexSignal(samples, SAMPLE_RATE_HZ))


def preamble_region(protocol: Protocol) -> ComplexSignal:
    """The deterministic head of a burst: everything before payload data."""
    if protocol is Protocol.B80211:
        return dsss_preamble()
    if protocol is Protocol.NOISE:
        raise InvalidSpec("noise has no preamble")
    extra_head = _OFDM_LAYOUT[protocol][4]
    head = np.concatenate(
        [legacy_training_fields(), _bpsk_signal_symbol(_lsig_bits(protocol)), extra_head()]
    )
    return power_normalize(ComplexSignal(head, SAMPLE_RATE_HZ))


# ---------------------------------------------------------------------------
# Overlapping two-transmitter captures
# ---------------------------------------------------------------------------

_WIDEBAND_RATE_HZ = 62.5e6

# canonical co-channel interference pairings (incumbent, interferer)
OVERLAP_PAIRS = [
    (Protocol.G80211, Protocol.N80211),
    (Protocol.B80211, Protocol.AX80211),
    (Protocol.B80211, Protocol.G80211),
    (Protocol.B80211, Protocol.N80211),
    (Protocol.G80211, Protocol.AX80211),
    (Protocol.N80211, Protocol.AX80211),
]


@dataclass(frozen=True)
class OverlapSpec:
    """Two transmitters at offset center frequencies seen by one receiver."""

    incumbent: Protocol
    interferer: Protocol
    rx_sample_rate_hz: float
    rx_center_freq_hz: float
    tx1_center_freq_hz: float
    tx2_center_freq_hz: float
    capture_len_samples: int
    interferer_gain: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.capture_len_samples < 256:
            raise InvalidSpec(f"capture too short: {self.capture_len_samples}")
        if self.interferer_gain < 0:
            raise InvalidSpec("interferer_gain must be >= 0")
        for f in (self.tx1_center_freq_hz, self.tx2_center_freq_hz):
            if abs(f - self.rx_center_freq_hz) >= _WIDEBAND_RATE_HZ / 2:
                raise InvalidSpec("transmitter falls outside the wideband working rate")

    @property
    def overlap_ratio(self) -> float:
        """Fraction of the 20 MHz channel the two transmissions share."""
        df = abs(self.tx2_center_freq_hz - self.tx1_center_freq_hz)
        return max(0.0, (CHANNEL_BANDWIDTH_HZ - df) / CHANNEL_BANDWIDTH_HZ)

    @property
    def protocols(self) -> list[Protocol]:
        if self.interferer_gain == 0.0:
            return [self.incumbent]
        return [self.incumbent, self.interferer]


def overlap_presets() -> dict[str, OverlapSpec]:
    """The four receiver/overlap operating points used for reporting:
    narrowband (20 MHz) and wideband (62.5 MHz) receivers at 25% and 50%
    spectral overlap. Protocol pair is filled in by the caller."""
    presets = {}
    for rx_name, rx_rate, rx_fc, cap in (
        ("narrow", 20e6, 2.442e9, 198080),
        ("wide", _WIDEBAND_RATE_HZ, 2.45e9, 309500),
    ):
        for pct, tx2 in ((25, 2.457e9), (50, 2.452e9)):
            presets[f"{rx_name}-{pct}"] = OverlapSpec(
                incumbent=Protocol.G80211,
                interferer=Protocol.N80211,
                rx_sample_rate_hz=rx_rate,
                rx_center_freq_hz=rx_fc,
                tx1_center_freq_hz=2.442e9,
                tx2_center_freq_hz=tx2,
                capture_len_samples=cap,
                name=f"{rx_name}-{pct}",
            )
    return presets


def _tiled_burst(protocol: Protocol, min_len: int, rng: np.random.Generator) -> np.ndarray:
    parts, have = [], 0
    while have < min_len:
        b = generate_burst(BurstSpec(protocol), rng).samples
        parts.append(b)
        have += b.size
    return np.concatenate(parts)[:min_len]


def generate_overlapping_capture(spec: OverlapSpec, rng: np.random.Generator) -> ComplexSignal:
    """Mix two frequency-offset transmissions into one receiver capture.

    Both transmitters are synthesized at 20 MHz, raised to a 62.5 MHz working
    rate, shifted to their offsets from the receiver center, summed at equal
    mean power (scaled by interferer_gain), and brought to the receiver rate.
    A narrowband receiver therefore sees the interferer through the
    resampler's anti-alias filter, exactly as a 20 MHz front end would.
    """
    need_20m = math.ceil(spec.capture_len_samples * SAMPLE_RATE_HZ / spec.rx_sample_rate_hz) + 4096

    mixed = None
    for protocol, tx_fc, gain in (
        (spec.incumbent, spec.tx1_center_freq_hz, 1.0),
        (spec.interferer, spec.tx2_center_freq_hz, spec.interferer_gain),
    ):
        if gain == 0.0:
            continue
        base = ComplexSignal(_tiled_burst(protocol, need_20m, rng), SAMPLE_RATE_HZ)
        wide = rational_resample(base, 25, 8)  # 20 MHz -> 62.5 MHz
        wide = frequency_shift(wide, tx_fc - spec.rx_center_freq_hz)
        scaled = gain * wide.samples / np.sqrt(mean_power(wide))
        if mixed is None:
            mixed = scaled
        else:
            n = min(mixed.size, scaled.size)
            mixed = mixed[:n] + scaled[:n]

    ratio = Fraction(int(spec.rx_sample_rate_hz)) / Fraction(int(_WIDEBAND_RATE_HZ))
    out = rational_resample(
        ComplexSignal(mixed, _WIDEBAND_RATE_HZ), ratio.numerator, ratio.denominator
    )
    if out.samples.size < spec.capture_len_samples:
        raise InsufficientSamples(
            f"capture needs {spec.capture_len_samples} samples, produced {out.samples.size}"
        )
    return power_normalize(
        ComplexSignal(out.samples[: spec.capture_len_samples], spec.rx_sample_rate_hz)
    )
