"""Smoke test for the pyflowdev extension module."""

import math

import pyflowdev as fd


def main():
    ds = fd.Dataset.generate(n_instances=200, variant="full", seed=3)
    assert len(ds) == 200 and ds.variant == "full"
    inst = ds.instance(0)
    assert {"question", "candidates", "gold_support"} <= set(inst)

    assert fd.answer_f1(["e3"], [["e3"]]) == 1.0
    assert fd.answer_f1(["e3", "e4"], [["e3"]]) == 2 / 3
    assert fd.support_f1([1, 2], [2, 3]) == 0.5

    prior = fd.Policies.prior(variant="full")
    ep = fd.run_episode(prior, ds, 0)
    assert ep["roles"][0] == "query_gen" and ep["roles"][-1] == "sufficiency"

    before = fd.evaluate(ds, prior)
    trained, summary = fd.train(ds, {"minibatch": "8", "seed": "3"})
    assert summary["episodes"] == 200
    assert len(summary["metrics"]) == 25
    after = fd.evaluate(ds, trained, enforce_grounded=True, pairwise=True)
    ok, total = after["pairs_exactly_one"]
    assert ok == total == 100
    assert trained.weights("retrieve") != prior.weights("retrieve")
    assert all(math.isfinite(w) for w in trained.weights("retrieve"))
    print(f"answer f1 {before['answer_f1']:.3f} -> {after['answer_f1']:.3f}, "
          f"support f1 {before['support_f1']:.3f} -> {after['support_f1']:.3f}")
    print("smoke test ok")


if __name__ == "__main__":
    main()
