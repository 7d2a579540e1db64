"""Smoke test for the cruc Python module.

Build and install first:
    pip install --no-build-isolation ./crates/py
"""

import cruc

data, truth = cruc.generate(experiments=30, trials=20, dim=4, clusters=3, sigma=0.1, seed=1)
assert len(data) == 30 and data.dim == 4
assert sorted(set(truth.assignments)) == [0, 1, 2]

train, test = data.split(0.7, seed=0)
ir = cruc.fit("ir", train)
lor1 = cruc.fit("lor", train, t=1)
assert all(abs(a - b) < 1e-8 for u, v in zip(ir.vectors, lor1.vectors) for a, b in zip(u, v))

report = cruc.evaluate("lor", train, test, t=10)
assert report["mse"] >= 0 and 0 <= report["classification_error"] <= 1
print("lor test mse", report["mse"])

err = cruc.parameter_mse(cruc.fit("lor", data, t=10), truth)
print("lor parameter mse", err, "asymptote", cruc.asymptotic_mse(0.1, 4, 10, 20))

again = cruc.Dataset.from_letor(data.to_letor(), 4)
assert again.ids == data.ids

try:
    cruc.fit("em", train)
except cruc.CrucError as e:
    assert "E_USAGE" in str(e)
else:
    raise AssertionError("em without k should fail")

print("smoke test ok")
