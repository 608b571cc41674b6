"""Per-layer GEMM benchmarking, stage profiling and report emission."""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import kernels
from .kernels import GemmProblem
from .lut import LookupTable, LUTOverflowError, build_lut16, build_lut65k, build_lut_general
from .packing import PackScheme, Role, aligned_zeros, pack, pack_weight_matrix
from .quant import CodeTensor, QuantParams, quantize_uniform, value_table, zero_code

log = logging.getLogger(__name__)

KERNELS = ("lut16", "lut65k", "ref_i8", "ref_f32")
LUT_KERNELS = ("lut16", "lut65k")
CSV_HEADER = ["shape_m", "shape_n", "shape_k", "kernel", "scheme", "median_ns", "baseline_ns", "speedup"]
CLOCK = "time.perf_counter_ns"


class CatalogError(ValueError):
    pass


class CorrectnessGateError(RuntimeError):
    """A kernel disagreed with the brute-force oracle before timing."""


# --------------------------------------------------------------------------
# Catalogs

@dataclass(frozen=True)
class ShapeCatalog:
    name: str
    shapes: tuple[GemmProblem, ...]

    def __post_init__(self):
        if not self.shapes:
            raise CatalogError(f"catalog {self.name!r} has no shapes")
        object.__setattr__(self, "shapes", tuple(self.shapes))


def builtin_catalogs() -> list[str]:
    root = resources.files("lutgemm") / "catalogs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".csv"))


def parse_catalog(text: str, name: str = "catalog") -> ShapeCatalog:
    shapes = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise CatalogError(f"{name}:{lineno}: expected 'M,N,K', got {raw.strip()!r}")
        try:
            m, n, k = (int(p) for p in parts)
            shapes.append(GemmProblem(m, n, k))
        except ValueError as exc:
            raise CatalogError(f"{name}:{lineno}: {exc}") from None
    if not shapes:
        raise CatalogError(f"{name}: no shapes found")
    return ShapeCatalog(name, tuple(shapes))


def load_catalog(path) -> ShapeCatalog:
    """Read an ``M,N,K`` CSV file, or a built-in catalog by name."""
    p = Path(path)
    if p.is_file():
        return parse_catalog(p.read_text(), p.stem)
    if str(path) in builtin_catalogs():
        text = (resources.files("lutgemm") / "catalogs" / f"{path}.csv").read_text()
        return parse_catalog(text, str(path))
    raise CatalogError(f"no catalog file or built-in catalog named {str(path)!r}")


# --------------------------------------------------------------------------
# Report types

@dataclass(frozen=True)
class StageTiming:
    act_quantize_ns: float
    act_pack_ns: float
    lut_conv_ns: float
    act_dequantize_ns: float
    unpack_fraction: float
    lookup_fraction: float
    accumulate_fraction: float
    instrumented: bool = True

    def largest_stage(self) -> str:
        stages = {
            "act_quantize": self.act_quantize_ns,
            "act_pack": self.act_pack_ns,
            "lut_conv": self.lut_conv_ns,
            "act_dequantize": self.act_dequantize_ns,
        }
        return max(stages, key=stages.get)


@dataclass
class ShapeRecord:
    shape: GemmProblem
    kernel: str
    scheme: str
    bits: int
    repeats: int
    samples_ns: list[int]
    median_ns: float
    baseline: str
    baseline_median_ns: float
    speedup: float
    stages: StageTiming | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape"] = {"M": self.shape.M, "N": self.shape.N, "K": self.shape.K}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeRecord":
        d = dict(d)
        d["shape"] = GemmProblem(**d["shape"])
        if d.get("stages") is not None:
            d["stages"] = StageTiming(**d["stages"])
        return cls(**d)


@dataclass
class ProfileReport:
    environment: dict
    records: list[ShapeRecord]
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "environment": self.environment,
            "records": [r.to_dict() for r in self.records],
            "summary": self.summary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProfileReport":
        return cls(d["environment"], [ShapeRecord.from_dict(r) for r in d["records"]], d["summary"])


def geomean(values) -> float:
    values = [float(v) for v in values]
    if not values or any(v <= 0 for v in values):
        raise ValueError("geometric mean needs a non-empty list of positive values")
    return math.exp(sum(math.log(v) for v in values) / len(values))


def speedup_trend(records: list[ShapeRecord]) -> tuple[list[tuple[int, float]], bool]:
    """Speedup per distinct N (geomean over ties), ascending N, and whether it never drops."""
    by_n: dict[int, list[float]] = {}
    for r in records:
        by_n.setdefault(r.shape.N, []).append(r.speedup)
    series = [(n, geomean(v)) for n, v in sorted(by_n.items())]
    ok = all(b >= a for (_, a), (_, b) in zip(series, series[1:]))
    return series, ok


def environment_info(force_scalar: bool = False) -> dict:
    return {
        "avx2": kernels.cpu_has_avx2(),
        "kernel_path": kernels.select_kernel_path(force_scalar or None),
        "force_scalar": bool(force_scalar),
        "clock": CLOCK,
        "baseline_tag": "internal",
        "machine": platform.machine(),
        "python": platform.python_version(),
    }


# --------------------------------------------------------------------------
# Workloads

def benchmark_params(bits: int) -> QuantParams:
    """Signed uniform map with unit scale: codes decode to small integers."""
    return QuantParams(scale=1.0, zero_point=0.0, bits=bits, signed=True)


def _int_domain_table(builder, *args) -> LookupTable:
    try:
        return builder(*args, "int8")
    except LUTOverflowError:
        return builder(*args, "int32")


def _aligned_copy(x: np.ndarray, dtype) -> np.ndarray:
    out = aligned_zeros(x.shape, dtype)
    out[...] = x
    return out


class Workload:
    """Random quantized operands for one shape, prepared for every kernel."""

    def __init__(self, shape: GemmProblem, bits: int, scheme, seed: int, index: int = 0):
        self.shape = shape
        self.bits = bits
        self.scheme = PackScheme.parse(scheme)
        self.params = benchmark_params(bits)
        rng = np.random.default_rng([seed, index])
        hi = 1 << bits
        self.codes_a = CodeTensor(rng.integers(0, hi, (shape.M, shape.N)), bits, True)
        self.codes_w = CodeTensor(rng.integers(0, hi, (shape.N, shape.K)), bits, True)
        self._cache: dict = {}

    def reference(self) -> np.ndarray:
        if "ref" not in self._cache:
            self._cache["ref"] = kernels.gemm_reference_quant(
                self.codes_a, self.codes_w, self.params, self.params, "int")
        return self._cache["ref"]

    def _pad(self):
        return zero_code(self.params)

    def prepare(self, kernel: str):
        """Offline preparation (weight packing, tables); excluded from timing."""
        if kernel in self._cache:
            return self._cache[kernel]
        p, pad = self.params, self._pad()
        if kernel == "lut16":
            lut = _int_domain_table(build_lut_general, self.bits, p, p)
            prep = (pack(self.codes_a, self.scheme, Role.ACTIVATION, pad),
                    pack_weight_matrix(self.codes_w, self.scheme, pad), lut)
        elif kernel == "lut65k":
            if self.bits != 2:
                raise ValueError("lut65k supports 2-bit operands only")
            prep = (pack(self.codes_a, PackScheme.A, Role.ACTIVATION, pad),
                    pack_weight_matrix(self.codes_w, PackScheme.A, pad),
                    _int_domain_table(build_lut65k, p, p))
        elif kernel in ("ref_i8", "ref_f32"):
            table = value_table(p)
            a = table[self.codes_a.codes]
            w_t = table[self.codes_w.codes.T]
            dtype = np.int8 if kernel == "ref_i8" else np.float32
            prep = (_aligned_copy(a, dtype), _aligned_copy(w_t, dtype))
        else:
            raise ValueError(f"unknown kernel {kernel!r}; choose from {KERNELS}")
        self._cache[kernel] = prep
        return prep

    def runner(self, kernel: str, path: str | None = None, workers: int = 1):
        prep = self.prepare(kernel)
        if kernel == "lut16":
            pa, pw, lut = prep
            return lambda: kernels.gemm_lut16(pa, pw, lut, path=path, workers=workers)
        if kernel == "lut65k":
            pa, pw, lut = prep
            return lambda: kernels.gemm_lut65k(pa, pw, lut, workers=workers)
        if kernel == "ref_i8":
            a, w_t = prep
            return lambda: kernels.gemm_ref_i8(a, w_t, path=path)
        a, w_t = prep
        return lambda: kernels.gemm_ref_f32(a, w_t)

    def check(self, kernel: str, path: str | None = None, workers: int = 1) -> None:
        out = self.runner(kernel, path, workers)()
        ref = self.reference()
        # fp32 sums of these small integers are exact, so every kernel must match bit for bit
        if not np.array_equal(np.asarray(out).astype(np.int64), ref.astype(np.int64)):
            bad = np.argwhere(np.asarray(out).astype(np.int64) != ref)[0]
            raise CorrectnessGateError(
                f"{kernel} disagrees with the oracle on shape {self.shape} at {tuple(bad)}: "
                f"{out[tuple(bad)]} != {ref[tuple(bad)]}"
            )


def validate_config(kernel: str, scheme, bits: int, baseline: str) -> PackScheme:
    for name, k in (("kernel", kernel), ("baseline", baseline)):
        if k not in KERNELS:
            raise ValueError(f"unknown {name} {k!r}; choose from {', '.join(KERNELS)}")
    if bits not in (2, 3, 4):
        raise ValueError(f"bits must be 2, 3 or 4, got {bits}")
    if "lut65k" in (kernel, baseline) and bits != 2:
        raise ValueError("lut65k supports 2-bit operands only")
    return PackScheme.parse(scheme)


def _time_interleaved(fns: list, repeats: int, warmup: int) -> list[list[int]]:
    for _ in range(warmup):
        for f in fns:
            f()
    samples: list[list[int]] = [[] for _ in fns]
    clock = time.perf_counter_ns
    for _ in range(repeats):
        for i, f in enumerate(fns):
            t0 = clock()
            f()
            samples[i].append(clock() - t0)
    return samples


def run_benchmark(catalog: ShapeCatalog, kernel: str = "lut16", scheme="D", bits: int = 2,
                  repeats: int = 100, warmup: int = 10, seed: int = 0, baseline: str = "ref_i8",
                  force_scalar: bool = False, workers: int = 1, profile: bool = False) -> ProfileReport:
    """Time ``kernel`` against ``baseline`` on every catalog shape.

    Every kernel involved is first checked against the oracle; a mismatch
    raises ``CorrectnessGateError`` before any timing. Kernel and baseline
    runs are interleaved within each repeat.
    """
    scheme = validate_config(kernel, scheme, bits, baseline)
    if repeats < 1 or warmup < 0:
        raise ValueError("repeats must be >= 1 and warmup >= 0")
    path = kernels.select_kernel_path(force_scalar or None)
    records = []
    for i, shape in enumerate(catalog.shapes):
        wl = Workload(shape, bits, scheme, seed, i)
        ids = [kernel] if baseline == kernel else [kernel, baseline]
        for k in ids:
            wl.check(k, path, workers)
        fns = [wl.runner(k, path) for k in ids]  # timing stays single-threaded
        samples = _time_interleaved(fns, repeats, warmup)
        med = float(np.median(samples[0]))
        base_med = float(np.median(samples[-1]))
        stages = None
        if profile and kernel in LUT_KERNELS and bits == 2:
            stages = profile_stages(shape, kernel, scheme, repeats=max(3, min(repeats, 15)),
                                    seed=seed, force_scalar=force_scalar)
        records.append(ShapeRecord(
            shape=shape,
            kernel=kernel,
            scheme=scheme.name if kernel == "lut16" else ("A" if kernel == "lut65k" else "-"),
            bits=bits,
            repeats=repeats,
            samples_ns=[int(s) for s in samples[0]],
            median_ns=med,
            baseline=baseline,
            baseline_median_ns=base_med,
            speedup=base_med / med if med > 0 else float("inf"),
            stages=stages,
        ))
        log.info("%s %s: %.0f ns vs %s %.0f ns (%.2fx)", catalog.name, shape, med, baseline,
                 base_med, records[-1].speedup)

    series, trend_ok = speedup_trend(records)
    summary = {
        "catalog": catalog.name,
        "kernel": kernel,
        "baseline": baseline,
        "baseline_tag": "internal",
        "shapes": len(records),
        "geomean_speedup": geomean(r.speedup for r in records),
        "vectorized_dimension": "N",
        "speedup_by_n": [[n, s] for n, s in series],
        "speedup_nondecreasing_in_n": trend_ok,
    }
    return ProfileReport(environment_info(force_scalar), records, summary)


# --------------------------------------------------------------------------
# Stage profiling

def _median_ns(fn, repeats: int) -> float:
    fn()
    clock = time.perf_counter_ns
    ts = []
    for _ in range(repeats):
        t0 = clock()
        fn()
        ts.append(clock() - t0)
    return float(np.median(ts))


def split_fractions(t_unpack: float, t_lookup: float, t_full: float) -> tuple[float, float, float]:
    """Cumulative stage timings to fractions; noise-induced negative steps count as zero."""
    parts = [max(t_unpack, 0.0), max(t_lookup - t_unpack, 0.0), max(t_full - t_lookup, 0.0)]
    total = sum(parts)
    if total <= 0:
        return (1.0, 0.0, 0.0)
    u, l, a = (p / total for p in parts)
    return (u, l, 1.0 - u - l)


def dequantize_output(acc: np.ndarray, a_params: QuantParams, w_params: QuantParams) -> np.ndarray:
    """Integer accumulators of decoded products back to float32 outputs."""
    return acc.astype(np.float32) * np.float32(1.0 / (a_params.scale * w_params.scale))


def profile_stages(shape: GemmProblem, kernel: str = "lut16", scheme="D", bits: int = 2,
                   repeats: int = 10, seed: int = 0, force_scalar: bool = False) -> StageTiming:
    """Time the four stages of one quantized layer on identical inputs.

    LUT-conv sub-step fractions come from instrumented kernel builds that stop
    after index extraction and after lookup; they are not production timings.
    """
    if kernel not in LUT_KERNELS:
        raise ValueError(f"stage profiling needs a LUT kernel, got {kernel!r}")
    if bits != 2:
        raise ValueError("stage profiling is instrumented for 2-bit kernels only")
    scheme = PackScheme.parse(scheme) if kernel == "lut16" else PackScheme.A
    path = kernels.select_kernel_path(force_scalar or None)
    wl = Workload(shape, bits, scheme, seed)
    p = wl.params
    rng = np.random.default_rng([seed, 1 << 20])
    lo, hi = p.representable_range()
    x = rng.uniform(lo, hi, (shape.M, shape.N))
    pad = zero_code(p)
    pa, pw, lut = wl.prepare(kernel)

    t_quant = _median_ns(lambda: quantize_uniform(x, p), repeats)
    codes = quantize_uniform(x, p)
    t_pack = _median_ns(lambda: pack(codes, scheme, Role.ACTIVATION, pad), repeats)
    pa = pack(codes, scheme, Role.ACTIVATION, pad)

    if kernel == "lut16":
        stage_fn = lambda s: kernels.lut16_stage_pass(pa, pw, lut, s, path)  # noqa: E731
    else:
        stage_fn = lambda s: kernels.lut65k_stage_pass(pa, pw, lut, s)  # noqa: E731
    # round-robin so timing noise hits the three passes alike
    stage_samples = _time_interleaved([lambda s=s: stage_fn(s) for s in (0, 1, 2)], repeats, 1)
    t_stage = [float(np.median(x)) for x in stage_samples]
    acc = stage_fn(2)
    t_deq = _median_ns(lambda: dequantize_output(acc, p, p), repeats)
    u, l, a = split_fractions(*t_stage)
    return StageTiming(
        act_quantize_ns=t_quant,
        act_pack_ns=t_pack,
        lut_conv_ns=t_stage[2],
        act_dequantize_ns=t_deq,
        unpack_fraction=u,
        lookup_fraction=l,
        accumulate_fraction=a,
    )


# --------------------------------------------------------------------------
# Emission

def emit_report(report: ProfileReport, fmt: str = "json", path=None) -> str:
    """Serialize ``report``; write it to ``path`` when given. Returns the text."""
    if not report.records:
        raise ValueError("refusing to emit a report without records")
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=2) + "\n"
    elif fmt == "csv":
        import io

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in report.records:
            writer.writerow([r.shape.M, r.shape.N, r.shape.K, r.kernel, r.scheme,
                             repr(r.median_ns), repr(r.baseline_median_ns), repr(r.speedup)])
        text = buf.getvalue()
    else:
        raise ValueError(f"format must be 'json' or 'csv', got {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def read_report(path) -> ProfileReport:
    return ProfileReport.from_dict(json.loads(Path(path).read_text()))
