"""One-time brute-force sweep locating a near-target point of the toy simulator.

Scans 2**20 Sobol points, scores them with the default targets/weights under
a standardizer fitted on the standard 400-point initial dataset, and writes
the best point to tests/fixtures/reachable_point.json.
"""

import json
import sys

import numpy as np

from surropt.objective import ObjectiveSpec, loss_physical
from surropt.qmc import SobolSequence
from surropt.simbench import TOY_DEFAULT_TARGETS, TOY_DEFAULT_WEIGHTS, ToyFlareSim
from surropt.surrogate import Standardizer


def main() -> None:
    sim = ToyFlareSim()
    ref = SobolSequence(13).sample_batch(400, sim.bounds)
    ref_y = np.array([sim.evaluate(x) for x in ref])
    std = Standardizer.fit(ref, ref_y)
    spec = ObjectiveSpec(TOY_DEFAULT_TARGETS, TOY_DEFAULT_WEIGHTS, sim.bounds)

    seq = SobolSequence(13)
    best = (np.inf, None, None)
    total = 2**20
    chunk = 2**14
    done = 0
    while done < total:
        xs = seq.sample_batch(chunk, sim.bounds)
        for x in xs:
            y = sim.evaluate(x)
            v = loss_physical(spec, std, y, x)
            if v < best[0]:
                best = (v, x.copy(), y.copy())
        done += chunk
        print(f"{done}/{total} best={best[0]:.6f}", file=sys.stderr)

    doc = {
        "loss": float(best[0]),
        "u": [float(v) for v in best[1]],
        "y": [float(v) for v in best[2]],
        "standardizer_source": "first 400 Sobol records, offset 1",
        "points_swept": total,
    }
    with open("tests/fixtures/reachable_point.json", "w") as fh:
        json.dump(doc, fh, indent=1)
    print(json.dumps(doc, indent=1))


if __name__ == "__main__":
    main()
