import os
import pickle
import time

import numpy as np
import pytest

from gradecast import kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # JIT compilation happens once here so timed tests measure compute only.
    kernels.warmup()


# ---------------------------------------------------------------------------
# shared benchmark runs for the acceptance suite
#
# One pass over ten generator seeds trains CSR_PC / MLP / LSTM per target
# course and collects everything the benchmark-based acceptance criteria
# consume (pooled test MAEs, MC-dropout distributions, collective-influence
# rankings). Expensive (~10 minutes), computed lazily and only once.

BENCH_SEEDS = tuple(range(42, 52))
MLP_GRID = [{"layers": 2, "units": 16, "dropout": 0.1}]
LSTM_GRID = [{"hidden": 32, "stack": 1, "dropout": 0.1},
             {"hidden": 16, "stack": 1, "dropout": 0.1}]
BENCH_ITERS = 2500
MC_SAMPLES = 100


def _run_bench_seed(seed):
    from gradecast import data, explain, metrics, models, synthgen
    from gradecast import uncertainty as unc

    spec = synthgen.bench_small(seed=seed)
    records, _, _, oracle = synthgen.generate(spec)
    pooled = {"CSR_PC": [], "MLP": [], "LSTM": []}
    labels = []
    val_dists, val_labels, test_dists, test_labels = [], [], [], []
    top1_hits = []
    train_seconds = 0.0
    for target in spec.targets:
        priors = [p for p, _ in spec.edges[target]]
        ds = data.build_course_dataset(records, target, priors)
        test_term = data.resolve_test_term(ds, "last")
        train, val, test = data.temporal_split(ds, test_term)
        labels.extend(test.labels())

        t0 = time.monotonic()
        csr = models.fit_csr(train, "PC", 1.0)
        pooled["CSR_PC"].extend(models.predict_dataset(csr, test))
        mlp = models.fit_course_model("MLP", train, val, MLP_GRID, seed=seed,
                                      max_iters=BENCH_ITERS)
        pooled["MLP"].extend(models.predict_dataset(mlp, test))
        lstm = models.fit_course_model("LSTM", train, val, LSTM_GRID,
                                       seed=seed, max_iters=BENCH_ITERS)
        pooled["LSTM"].extend(models.predict_dataset(lstm, test))
        train_seconds += time.monotonic() - t0

        val_dists += unc.predict_mc_dataset(mlp, val, n_samples=MC_SAMPLES,
                                            tau_inv=0.0, seed=seed)
        val_labels += list(val.labels())
        test_dists += unc.predict_mc_dataset(mlp, test, n_samples=MC_SAMPLES,
                                             tau_inv=0.0, seed=seed + 1)
        test_labels += list(test.labels())

        table = explain.influence_collective_table(lstm, ds)
        ranked = [e.prior for e in explain.top_influential(table, len(table))]
        planted = oracle.planted_top_prior(target)
        top1_hits.append((ranked[0] == planted, ranked.index(planted) + 1))

    labels = np.array(labels)
    maes = {fam: metrics.mae(np.array(p), labels) for fam, p in pooled.items()}
    return {
        "maes": maes,
        "val_dists": val_dists,
        "val_labels": np.array(val_labels),
        "test_dists": test_dists,
        "test_labels": np.array(test_labels),
        "top1_hits": top1_hits,
        "train_seconds": train_seconds,
    }


@pytest.fixture(scope="session")
def bench_runs():
    # Optional on-disk cache for development iteration: results are fully
    # deterministic, so caching only skips recomputation, never changes them.
    cache_dir = os.environ.get("GRADECAST_BENCH_CACHE")
    runs = {}
    for seed in BENCH_SEEDS:
        cache_path = (os.path.join(cache_dir, f"bench_{seed}.pkl")
                      if cache_dir else None)
        if cache_path and os.path.exists(cache_path):
            with open(cache_path, "rb") as fh:
                runs[seed] = pickle.load(fh)
            continue
        runs[seed] = _run_bench_seed(seed)
        if cache_path:
            os.makedirs(cache_dir, exist_ok=True)
            with open(cache_path, "wb") as fh:
                pickle.dump(runs[seed], fh)
    return runs
