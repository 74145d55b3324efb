"""Smoke test for the microgrid_ems extension module.

Build and install it first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o target/wheels
    pip install target/wheels/microgrid_ems-*.whl
    python python/smoke_test.py
"""

import math
import os
import tempfile

import microgrid_ems as mg


def main():
    scen = mg.Scenario.synthetic(days=3, seed=11)
    assert len(scen) == 72
    assert scen.dt_h == 1.0
    assert scen.content_hash() == mg.Scenario.synthetic(days=3, seed=11).content_hash()

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "scenario.csv")
        scen.save_csv(path)
        again = mg.Scenario.from_csv(path)
        assert again.content_hash() == scen.content_hash()
        try:
            mg.Scenario.from_csv(os.path.join(tmp, "missing.csv"))
        except ValueError as err:
            assert "missing.csv" in str(err)
        else:
            raise AssertionError("missing scenario accepted")

    env = mg.Microgrid(scen, seed=4)
    state = env.reset()
    steps = 0
    while not env.done:
        state, rec = env.step(-20.0, 0.0)
        residual = (rec["p_pv_used"] + rec["p_w_used"] + rec["p_dis"] + rec["p_dg"]
                    + rec["p_grid_import"] + rec["unmet_kw"]
                    - rec["load_kw"] - rec["p_ch"] - rec["p_grid_export"])
        assert abs(residual) < 1e-9, residual
        assert 0.1 <= rec["soc_after"] <= 0.9
        steps += 1
    assert steps == 72

    rbc = mg.simulate_rbc(scen, seed=4)
    kpis = rbc.kpis()
    for key in ("reliability_pct", "battery_cycles", "self_sufficiency_pct",
                "renewable_utilization_pct", "operational_cost"):
        assert math.isfinite(kpis[key]), key
    assert len(rbc.records()) == 72

    policy = mg.train_ppo(scen, seed=4, total_steps=512, rollout_length=256)
    assert len(policy.log()) == 2
    ppo = policy.evaluate(scen, seed=4)
    p_bat, p_dg = policy.act(env.reset())
    assert abs(p_bat) <= 50.0 and 0.0 <= p_dg <= 80.0

    report, table = mg.compare(rbc, ppo)
    assert len(report["rows"]) == 5
    assert "Key Improvement" in table

    other = mg.simulate_rbc(scen, seed=5)
    try:
        mg.compare(rbc, other)
    except ValueError:
        pass
    else:
        raise AssertionError("mismatched scenarios compared")

    print(table)
    print("smoke test passed")


if __name__ == "__main__":
    main()
