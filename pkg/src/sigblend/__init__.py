"""Trading research lab for blended sentiment/technical signals.

Two strategy families over the same daily panel data:

* rule-based cross-sectional quintile portfolios built from a convex
  combination of a technical signal and a news-sentiment signal, and
* a TD3 reinforcement-learning allocator over a long-only portfolio
  environment with softmax-projected actions.

Everything is file-driven (plain CSV in, plain CSV/JSON out) and
deterministic: the same inputs, config, and seed reproduce artifacts
byte for byte.
"""

__version__ = "0.1.0"
