"""Quick end-to-end check of the Python bindings."""

import math
import sys
import tempfile
from pathlib import Path

import factorclust_py as fc


def main():
    alpha, beta = fc.theil_sen([0, 1, 2, 3, 4], [1, 3, 5, 7, 100])
    assert beta == 2.0 and alpha == 1.0, (alpha, beta)
    _, ols_beta = fc.ols([0, 1, 2, 3, 4], [1, 3, 5, 7, 100])
    assert abs(ols_beta - 2.0) > 1

    d = fc.DistanceMatrix(["A", "B", "C"], [[0, 1, 4], [1, 0, 5], [4, 5, 0]])
    tree = d.cluster()
    assert tree.merges == [(0, 1, 1.0, 2), (3, 2, 4.5, 3)], tree.merges
    assert tree.newick() == "((A:1,B:1):3.5,C:4.5);"
    back = fc.Dendrogram.from_newick(tree.newick())
    assert back.merges == tree.merges
    assert tree.smallest_common_cluster("A", "B") == ["A", "B"]

    panel = fc.ReturnsPanel.synth("days = 400", seed=3)
    assert len(panel) == 60 and len(panel.dates) == 400
    raw_tree = panel.distance_matrix().cluster()
    sectors = raw_tree.leaf_labels(panel, "sector")
    p, pval = raw_tree.permutation_test(sectors, sectors[0], replicates=99, seed=1)
    assert 0 <= p <= 1 and 0 < pval <= 1

    residual = panel.defactor("sector")
    res_tree = residual.distance_matrix().cluster()
    countries = res_tree.leaf_labels(residual, "country")
    raw_countries = raw_tree.leaf_labels(panel, "country")
    gain = res_tree.purity(countries, "DE") - raw_tree.purity(raw_countries, "DE")
    assert gain > 0, gain

    points, stress, _ = panel.distance_matrix().embed()
    assert len(points) == 60 and math.isfinite(stress)

    rows = residual.dynamic_purity(lam=0.05, burn_in=300)
    assert rows and all(0 <= r[2] <= 1 for r in rows)

    rho = fc.model_correlation("beta_country = 0.3", True, False)
    assert abs(rho - 1.25 / 2.34) < 1e-12

    try:
        fc.ReturnsPanel.synth("days = 1")
    except ValueError:
        pass
    else:
        raise AssertionError("invalid spec accepted")

    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "run.toml"
        cfg.write_text("replicates = 49\n[synth]\ndays = 300\n")
        written = fc.run_config(str(cfg))
        names = {Path(p).name for p in written}
        assert {"purity.csv", "tree.nwk", "embedding.csv", "manifest.toml"} <= names, names

    print("python smoke test ok")


if __name__ == "__main__":
    sys.exit(main())
