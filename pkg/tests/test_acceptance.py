"""Acceptance gate: one test per primary criterion, summarized at the end of the run."""

import time
from itertools import product

import numpy as np
import pytest

from conftest import VALUE_MAP_FIXTURES
from instances import random_instance
from lutgemm import bench, kernels
from lutgemm.costmodel import unpack_cost
from lutgemm.kernels import GemmProblem
from lutgemm.lut import build_lut16, build_lut65k, lut_storage
from lutgemm.packing import PackScheme, gather_index_lut65k, gather_indices_lut16, rotl8
from lutgemm.quant import QuantParams, dequantize_uniform, quantize_uniform, value_table

HAS_AVX2 = kernels.cpu_has_avx2()
SEED = 20240611


def oracle_suite(per_combo=64, seed=SEED):
    """(instance, scheme) pairs: every scheme x signedness, M,N,K drawn from [1, 64]."""
    rng = np.random.default_rng(seed)
    suite = []
    for scheme, signed in product(PackScheme, (True, False)):
        for _ in range(per_combo):
            M, N, K = rng.integers(1, 65, 3)
            suite.append((random_instance(rng, int(M), int(N), int(K), signed=signed), scheme))
    return suite


@pytest.fixture(scope="module")
def suite():
    return oracle_suite()


@pytest.mark.criterion("Oracle equivalence (LUT-16, >=500 instances, exact, <1 min)")
def test_lut16_oracle_equivalence(suite, detail):
    t0 = time.perf_counter()
    mismatches = [i for i, (inst, scheme) in enumerate(suite)
                  if not np.array_equal(inst.lut16(scheme), inst.oracle())]
    elapsed = time.perf_counter() - t0
    detail(f"{len(suite)} instances, {len(mismatches)} mismatches, {elapsed:.1f}s, "
           f"path={kernels.select_kernel_path()}")
    assert len(suite) >= 500
    assert not mismatches
    assert elapsed < 60


@pytest.mark.criterion("LUT-65k equivalence (>=200 instances incl. N%4!=0, exact)")
def test_lut65k_oracle_equivalence(detail):
    rng = np.random.default_rng(SEED + 1)
    n_total = n_ragged = bad = 0
    for i in range(240):
        M, N, K = (int(v) for v in rng.integers(1, 65, 3))
        inst = random_instance(rng, M, N, K, signed=bool(i % 2))
        # alternate zero-code padding with the per-pair remainder path
        out = inst.lut65k(pad=i % 3 != 0)
        bad += not np.array_equal(out, inst.oracle())
        n_total += 1
        n_ragged += N % 4 != 0
    detail(f"{n_total} instances ({n_ragged} with N%4!=0), {bad} mismatches")
    assert n_total >= 200 and n_ragged > 0 and bad == 0


@pytest.mark.criterion("Exhaustive index test (65,536 byte pairs x 4 schemes; LUT-65k bijective)")
def test_exhaustive_indices(detail):
    w_nat, a = (x.ravel() for x in np.meshgrid(np.arange(256), np.arange(256), indexing="ij"))
    want = np.stack([(((w_nat >> 2 * j) & 3) << 2) | ((a >> 2 * j) & 3) for j in range(4)], axis=-1)
    results = {}
    for scheme in PackScheme:
        stored = rotl8(w_nat, 2) if scheme.rotated else w_nat
        results[scheme] = gather_indices_lut16(stored, a, scheme)
    agree = all(np.array_equal(r, want) for r in results.values())
    idx = gather_index_lut65k(w_nat, a)
    bijective = (np.sort(idx) == np.arange(1 << 16)).all()
    detail(f"{w_nat.size} pairs, schemes agree={agree}, 65k bijective={bool(bijective)}")
    assert agree and bijective


@pytest.mark.criterion("LUT content audit (LUT-16 exhaustive per value map; LUT-65k >=1e4 spot checks)")
def test_lut_content_audit(detail):
    checked16 = 0
    for wname, aname in product(VALUE_MAP_FIXTURES, repeat=2):
        w, a = VALUE_MAP_FIXTURES[wname], VALUE_MAP_FIXTURES[aname]
        integral = all(float(v).is_integer() for v in (*value_table(w), *value_table(a)))
        lut = build_lut16(w, a, "int32" if integral else "real")
        wv, av = [float(v) for v in value_table(w)], [float(v) for v in value_table(a)]
        for idx in range(16):
            assert lut.entries[idx] == wv[idx >> 2] * av[idx & 3], (wname, aname, idx)
        checked16 += 1

    rng = np.random.default_rng(SEED + 2)
    checked65 = 0
    for name in ("signed2", "ternary_codebook", "real_codebook"):
        vm = VALUE_MAP_FIXTURES[name]
        lut = build_lut65k(vm, vm, "real" if name == "real_codebook" else "int8")
        levels = [float(v) for v in value_table(vm)]
        for idx in rng.integers(0, 1 << 16, 10_000):
            wb, ab = int(idx) >> 8, int(idx) & 0xFF
            dot = 0.0
            for j in range(4):
                dot += levels[(wb >> 2 * j) & 3] * levels[(ab >> 2 * j) & 3]
            assert lut.entries[idx] == dot, (name, int(idx))
            checked65 += 1
    detail(f"{checked16} LUT-16 tables x 16 entries, {checked65} LUT-65k entries, 0 mismatches")


UNPACK_COSTS = {
    "A": {"and": 2, "shift": 1.5, "or": 1, "shuffle": 1, "total": 5.5},
    "B": {"and": 2, "shift": 1, "or": 0.5, "shuffle": 1, "total": 4.5},
    "C": {"and": 2, "shift": 0.5, "or": 1, "shuffle": 1, "total": 4.5},
    "D": {"and": 2, "shift": 0.5, "or": 0.5, "shuffle": 1, "total": 4.0},
}
LUT_FOOTPRINTS = {2: (4, 16, 128, 1), 3: (6, 64, 512, 2), 4: (8, 256, 2048, 8)}


@pytest.mark.criterion("Cost tables reproduced (unpack ops per scheme; LUT storage per bitwidth)")
def test_cost_tables(detail):
    got3 = {s: unpack_cost(s).as_dict() for s in UNPACK_COSTS}
    got2 = {b: (s.index_bits, s.entries, s.size_bits, s.vector_registers_256b)
            for b, s in ((b, lut_storage(b)) for b in LUT_FOOTPRINTS)}
    detail("totals " + ", ".join(f"{s}:{got3[s]['total']:g}" for s in got3)
           + "; registers " + "/".join(str(got2[b][3]) for b in got2))
    assert got3 == UNPACK_COSTS
    assert got2 == LUT_FOOTPRINTS
    assert all(lut_storage(b).fits_l1 for b in LUT_FOOTPRINTS)


@pytest.mark.criterion("Quantization bound (|x - deq(q(x))| <= 0.5/|s|, 1e5 samples per config)")
def test_quantization_bound(detail):
    rng = np.random.default_rng(SEED + 3)
    worst = 0.0
    configs = 0
    for bits, signed, scale, zp in product((2, 3, 4), (True, False), (1.0, 0.37, 4.0, -2.5), (0.0, 1.0)):
        p = QuantParams(scale, zp, bits, signed)
        lo, hi = p.representable_range()
        x = rng.uniform(lo, hi, (100, 1000))
        err = np.abs(x - dequantize_uniform(quantize_uniform(x, p), p))
        ratio = float(err.max() * abs(scale) / 0.5)
        worst = max(worst, ratio)
        configs += 1
        assert (err <= 0.5 / abs(scale)).all(), (bits, signed, scale, zp, ratio)
    detail(f"{configs} configs x 1e5 samples, worst error = {worst:.6f} of the bound")


@pytest.mark.criterion("Path equivalence (vector vs forced-scalar, oracle suite, exact)")
def test_path_equivalence(suite, detail):
    if not HAS_AVX2:
        pytest.skip("CPU lacks AVX2: only the scalar path exists")
    differing = sum(not np.array_equal(inst.lut16(s, path="vector"), inst.lut16(s, path="scalar"))
                    for inst, s in suite)
    detail(f"{len(suite)} instances, {differing} differ")
    assert differing == 0


@pytest.mark.slow
@pytest.mark.criterion("Performance (scheme D vector: >=1.2x ref_i8, >=3x ref_f32, geomean N>=512; "
                       "speedup non-decreasing in N; <5 min)")
def test_performance(detail):
    if not HAS_AVX2:
        pytest.skip("CPU lacks AVX2: the vector kernel cannot run")
    catalog = bench.load_catalog("sweep_n")
    assert min(s.N for s in catalog.shapes) >= 512
    t0 = time.perf_counter()
    vs_i8 = bench.run_benchmark(catalog, kernel="lut16", scheme="D", baseline="ref_i8")
    vs_f32 = bench.run_benchmark(catalog, kernel="lut16", scheme="D", baseline="ref_f32")
    elapsed = time.perf_counter() - t0
    g8, g32 = vs_i8.summary["geomean_speedup"], vs_f32.summary["geomean_speedup"]
    trend = vs_i8.summary["speedup_by_n"]
    detail(f"ref_i8 {g8:.2f}x, ref_f32 {g32:.1f}x, by N "
           + ", ".join(f"{n}:{s:.2f}" for n, s in trend) + f", {elapsed:.0f}s")
    assert vs_i8.environment["kernel_path"] == "vector"
    assert g8 >= 1.2
    assert g32 >= 3.0
    assert vs_i8.summary["speedup_nondecreasing_in_n"]
    assert elapsed < 300


def k1024_shapes():
    networks = [n for n in bench.builtin_catalogs() if n not in ("smoke", "sweep_n")]
    shapes = {s for n in networks for s in bench.load_catalog(n).shapes if s.K >= 1024}
    return sorted(shapes, key=lambda s: (s.M, s.N, s.K))


@pytest.mark.slow
@pytest.mark.criterion("Profiling sanity (K>=1024: lut_conv largest stage, unpack fraction > 0.5)")
def test_profiling(detail):
    shapes = k1024_shapes()
    assert shapes
    stages = [bench.profile_stages(s, "lut16", "D", repeats=25) for s in shapes]
    largest = {st.largest_stage() for st in stages}
    conv_total = sum(st.lut_conv_ns for st in stages)
    unpack = sum(st.unpack_fraction * st.lut_conv_ns for st in stages) / conv_total
    share = min(st.lut_conv_ns / (st.act_quantize_ns + st.act_pack_ns + st.lut_conv_ns
                                  + st.act_dequantize_ns) for st in stages)
    detail(f"{len(shapes)} shapes, largest={sorted(largest)}, min lut_conv share {share:.2f}, "
           f"unpack fraction {unpack:.2f} (per-shape min "
           f"{min(st.unpack_fraction for st in stages):.2f}), path={kernels.select_kernel_path()}")
    assert largest == {"lut_conv"}
    assert unpack > 0.5


@pytest.mark.criterion("Network accuracy results: excluded (needs ImageNet and quantization-aware training)")
def test_accuracy_table_excluded():
    pytest.skip("not reproducible here: needs ImageNet and quantization-aware training")
