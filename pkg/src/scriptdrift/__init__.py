"""scriptdrift: open-world analysis of handwriting line images.

The package is organized as a pipeline of small modules:

- `corpus`: line-image records, JSONL manifests, writer-aware fold splits
- `style_metrics`: the six per-line style measurements
- `ontology`: attribute binning, the writer knowledge graph, style distances
- `synth`: synthetic bar-stroke line rendering for tests and demos
- `augment`: image transforms and graded novelty-pool minting
- `features`: width-invariant gradient-histogram descriptors
- `evm`: the open-set writer model (Weibull tails, K+1 probabilities, EER
  threshold calibration, binary model files)
- `testgen`: factorial stream specs and sealed-oracle stream files
- `runner`: agents, the batched change detector, per-sample run records
- `metrics`: edit distance, clustering scores, report aggregation
- `config`: one declarative settings tree for the whole toolchain
- `cli`: the `scriptdrift` command line front end
- `selfcheck`: the synthetic acceptance suite behind `scriptdrift selfcheck`
- `seeding`: one master seed, derived per-purpose random streams
"""

__version__ = "0.1.0"

from . import (  # noqa: E402  (version first: cli reads it at import time)
    augment,
    cli,
    config,
    corpus,
    evm,
    features,
    metrics,
    ontology,
    runner,
    seeding,
    selfcheck,
    style_metrics,
    synth,
    testgen,
)

__all__ = [
    "__version__",
    "augment",
    "cli",
    "config",
    "corpus",
    "evm",
    "features",
    "metrics",
    "ontology",
    "runner",
    "seeding",
    "selfcheck",
    "style_metrics",
    "synth",
    "testgen",
]
