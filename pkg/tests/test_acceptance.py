"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
from scipy.stats import spearmanr

from protosel.baselines import select_fft, select_forward, select_kcentres
from protosel.cli import main
from protosel.dataset import Dataset, generate_blobs
from protosel.dissim import OnDemandProvider, PrecomputedProvider
from protosel.dspace import PrototypeSet, embed
from protosel.fitness import FitnessContext, fitness_mst, fitness_supervised, fitness_supervised_lsh
from protosel.ga import GaParams, run_ga
from protosel.harness import ExperimentConfig, read_records, run_experiment, summarize
from protosel.hashing import build_pivot_table, encode, sphere_membership, train_pivots

# Oracle run on generate_blobs(10, 500, 5, 0.5, 3), pivots seed 0, 50
# individuals of k=10 drawn with default_rng(0). Frozen before the check below.
SPEARMAN_CALIBRATION = 0.9369


def kruskal_weight(w):
    k = w.shape[0]
    parent = list(range(k))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    edges = sorted((w[i, j], i, j) for i in range(k) for j in range(i + 1, k))
    total = 0.0
    for weight, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            total += weight
    return total


def euclid(x):
    return np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))


def test_c01_mst_matches_kruskal(verdict):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        k = int(rng.integers(3, 13))
        w = np.zeros((k, k))
        iu = np.triu_indices(k, 1)
        w[iu] = 1.0 - rng.random(iu[0].size)  # uniform on (0, 1]
        w = w + w.T
        got = fitness_mst(np.arange(k), FitnessContext(PrecomputedProvider(w), np.arange(k), np.zeros(k)))
        worst = max(worst, abs(got - kruskal_weight(w)))
    elapsed = time.perf_counter() - t0
    verdict(1, "MST fitness equals Kruskal oracle", worst <= 1e-9 and elapsed < 5,
            f"max diff {worst:.2e}, {elapsed:.2f}s")


def test_c02_supervised_matches_brute_force(verdict):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    mismatches = 0
    for i in range(100):
        n = int(rng.integers(2, 201))
        k = int(rng.integers(1, min(15, n) + 1))
        x = rng.integers(0, 5, size=(n, 2)).astype(float)  # integer grid forces ties
        labels = rng.integers(0, 3, n).astype(str)
        ds = Dataset(x, labels)
        genes = rng.choice(n, k, replace=False)
        v = rng.choice(n, int(rng.integers(1, n + 1)), replace=False)
        ctx = FitnessContext(OnDemandProvider(ds), v, labels[v], labels=labels)
        expected = 0
        for a in v:
            best, best_d = None, np.inf
            for g in genes:
                d = np.sqrt(((x[a] - x[g]) ** 2).sum())
                if d < best_d:
                    best, best_d = g, d
            expected += labels[best] == labels[a]
        mismatches += fitness_supervised(genes, ctx) != expected
    elapsed = time.perf_counter() - t0
    verdict(2, "supervised fitness equals brute-force oracle", mismatches == 0 and elapsed < 5,
            f"{mismatches} mismatches, {elapsed:.2f}s")


def test_c03_mst_cost_is_independent_of_v(verdict):
    k = 12
    counts = []
    for n in (1_000, 10_000, 100_000):
        ds = generate_blobs(10, n // 10, 4, 1.0, 0)
        provider = OnDemandProvider(ds)
        v = np.arange(ds.n)
        ctx = FitnessContext(provider, v, ds.labels, labels=ds.labels)
        genes = np.random.default_rng(0).choice(ds.n, k, replace=False)
        before = provider.eval_count
        fitness_mst(genes, ctx)
        counts.append(provider.eval_count - before)
    ok = counts == [k * (k - 1) // 2] * 3
    verdict(3, "MST fitness uses k(k-1)/2 evaluations for any |V|", ok, f"counts {counts}")


def test_c04_cluster_constraint_holds(verdict):
    ds = generate_blobs(6, 60, 3, 0.8, 4)
    provider = OnDemandProvider(ds)
    v = np.arange(ds.n)
    ctx = FitnessContext(provider, v, ds.labels, labels=ds.labels)
    seen = {"violations": 0, "genes": 0, "generations": set()}

    def check(gen, population, best, clusters):
        seen["generations"].add(gen)
        for ind in population:
            for j, g in enumerate(ind.genes):
                seen["genes"] += 1
                seen["violations"] += clusters.cluster_of(g) != j

    for fitness in ("mst", "supervised"):
        run_ga(ctx, fitness, GaParams(population_size=20, generations=20, use_clustering=True, seed=3),
               v, 8, callback=check)
    ok = seen["violations"] == 0 and seen["generations"] == set(range(21))
    verdict(4, "every gene stays in its cluster", ok,
            f"{seen['violations']} violations over {seen['genes']} genes")


def test_c05_elitism_trace_non_decreasing(verdict):
    ds = generate_blobs(5, 40, 3, 1.0, 5)
    provider = OnDemandProvider(ds)
    v = np.arange(ds.n)
    ctx = FitnessContext(provider, v, ds.labels, labels=ds.labels)
    violations = runs = 0
    for seed in range(25):
        for fitness in ("mst", "supervised"):
            trace = run_ga(ctx, fitness, GaParams(generations=20, mutation_prob=0.1, seed=seed), v, 6).fitness_trace
            violations += sum(b < a for a, b in zip(trace, trace[1:]))
            runs += 1
    verdict(5, "fitness trace never decreases", violations == 0 and runs == 50, f"{runs} runs, {violations} violations")


def test_c06_quality_vs_random(verdict):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        blobs="10,300,5,0.6,0", selectors=["random", "ga-sup", "ga-mst-clust"], k_list=[10],
        repetitions=10, classifiers=["1nn"], output_dir=None, seed=2024,
    )
    means = {row["selector"]: row["mean_error"] for row in summarize(run_experiment(cfg), ["1nn"])}
    elapsed = time.perf_counter() - t0
    ok = means["ga-sup"] <= means["random"] and means["ga-mst-clust"] <= means["random"] + 0.01 and elapsed < 120
    verdict(6, "GA selectors beat random selection", ok,
            ", ".join(f"{key} {val:.4f}" for key, val in means.items()) + f", {elapsed:.1f}s")


def test_c07_fft_is_maximin(verdict):
    violations = 0
    for i in range(20):
        ds = generate_blobs(5, 40, 3, 1.0, 100 + i)
        d = euclid(ds.objects)
        candidates = np.arange(200)
        chosen = select_fft(OnDemandProvider(ds), candidates, 12, seed=i).indices.tolist()
        for t in range(1, len(chosen)):
            nearest = d[:, chosen[:t]].min(axis=1)
            best = max((c for c in range(200) if c not in chosen[:t]), key=lambda c: (nearest[c], -c))
            violations += chosen[t] != best
    verdict(7, "each FFT step is the exhaustive maximin choice", violations == 0, f"{violations} violations")


def test_c08_kcentres_monotone(verdict):
    rng = np.random.default_rng(8)
    violations = 0
    for i in range(50):
        ds = generate_blobs(int(rng.integers(2, 8)), int(rng.integers(10, 40)), 2, float(rng.uniform(0.3, 2)), 200 + i)
        k = int(rng.integers(2, 10))
        trace = select_kcentres(OnDemandProvider(ds), np.arange(ds.n), k, seed=i).fitness_trace
        violations += sum(b > a for a, b in zip(trace, trace[1:]))
    verdict(8, "Kcentres covering radius never increases", violations == 0, f"{violations} violations")


def test_c09_forward_matches_greedy_oracle(verdict):
    mismatches = 0
    for i in range(10):
        ds = generate_blobs(5, 68, 3, 1.2, 300 + i)
        rng = np.random.default_rng(i)
        perm = rng.permutation(ds.n)
        candidates, v = perm[:40], perm[40:340]
        d = euclid(ds.objects)
        ctx = FitnessContext(OnDemandProvider(ds), v, ds.labels[v], labels=ds.labels)

        def score(protos):
            dv = d[np.ix_(v, protos)]
            return sum(ds.labels[protos[int(np.argmin(row))]] == ds.labels[a] for row, a in zip(dv, v))

        chosen = []
        for _ in range(3):
            pool = [c for c in candidates.tolist() if c not in chosen]
            scores = [score(chosen + [c]) for c in pool]
            chosen.append(pool[int(np.argmax(scores))])
        mismatches += select_forward(ctx, candidates, 3).indices.tolist() != chosen
    verdict(9, "forward selection equals exhaustive greedy oracle", mismatches == 0, f"{mismatches} mismatches")


def test_c10_hashing_consistency(verdict):
    ds = generate_blobs(10, 500, 5, 0.5, 3)
    provider = OnDemandProvider(ds)
    v = np.arange(ds.n)
    table = build_pivot_table(provider, v, p=64, seed=0)
    emb = embed(provider, v, PrototypeSet(table.pivot_indices))
    same = np.array_equal(encode(provider, table, v), emb.vectors)

    big = generate_blobs(10, 1000, 5, 0.5, 3)
    big_provider = OnDemandProvider(big)
    pivots = train_pivots(big_provider, np.arange(big.n), p=64, seed=0)
    inside = sphere_membership(big_provider.block(np.arange(big.n), pivots.pivot_indices), pivots.radii)
    occupancy = inside.mean(axis=0)
    occupancy_ok = bool(np.all(np.abs(occupancy - 0.5) <= 0.10))

    ctx = FitnessContext(provider, v, ds.labels, accelerator=table, labels=ds.labels)
    rng = np.random.default_rng(0)
    individuals = [rng.choice(ds.n, 10, replace=False) for _ in range(50)]
    rho = spearmanr([fitness_supervised(g, ctx) for g in individuals],
                    [fitness_supervised_lsh(g, ctx) for g in individuals]).statistic
    ok = same and occupancy_ok and rho >= SPEARMAN_CALIBRATION - 0.05
    verdict(10, "pivot codes, occupancy and rank preservation", ok,
            f"encode==embed {same}, occupancy [{occupancy.min():.3f}, {occupancy.max():.3f}], spearman {rho:.4f}")


def _median_time(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def test_c11_hashing_speed(verdict):
    ds = generate_blobs(10, 2000, 1024, 1.0, 0)
    provider = OnDemandProvider(ds)
    v = np.arange(ds.n)
    t0 = time.perf_counter()
    table = build_pivot_table(provider, v, p=64, seed=0)
    setup = time.perf_counter() - t0
    ctx = FitnessContext(provider, v, ds.labels, accelerator=table, labels=ds.labels)
    ctx.validation_codes()
    genes = np.random.default_rng(0).choice(ds.n, 20, replace=False)
    exact = _median_time(lambda: fitness_supervised(genes, ctx))
    fast = _median_time(lambda: fitness_supervised_lsh(genes, ctx))
    speedup = exact / fast
    saved = 20 * 20 * (exact - fast)
    ok = speedup >= 5 and saved >= setup
    verdict(11, "LSH fitness is fast and its setup pays off in one run", ok,
            f"{speedup:.1f}x, one-time setup {setup:.1f}s vs {saved:.1f}s saved per run")


def test_c12_bench_is_deterministic(verdict, tmp_path):
    cfg = tmp_path / "bench.txt"
    cfg.write_text(
        "blobs = 4,40,3,0.7,1\nselectors = random;fft;kcentres;forward;ga-mst-clust(iter=5);"
        "ga-sup(iter=5);ga-sup-lsh(iter=5,p=8)\nk_list = 3,6\nrepetitions = 2\nclassifiers = 1nn,ldc\n"
    )
    runs = []
    for name in ("a", "b"):
        assert main(["bench", "--config", str(cfg), "--seed", "77", "--output-dir", str(tmp_path / name)]) == 0
        runs.append(read_records(tmp_path / name / "records.csv"))
    compared = ["selector", "k", "repetition", "seed", "status", "indices", "fitness_trace",
                "evals", "error_1nn", "error_ldc"]
    a, b = ([[row[c] for c in compared] for row in rows] for rows in runs)
    ok = len(a) == 7 * 2 * 2 and a == b and all(row[4] == "ok" for row in a)
    verdict(12, "bench reruns give identical errors and selections", ok, f"{len(a)} records compared")
