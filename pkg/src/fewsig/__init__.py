"""Few-shot text classification from distributional word signatures.

The engine classifies documents in N-way K-shot episodes. Per episode it
computes two word statistics (general importance from source-pool frequency,
class-specific importance from support-set conditionals), fuses them with a
meta-learned biLSTM attention generator, builds attention-weighted embedding
representations, and fits a closed-form ridge head on the support set. The
query cross-entropy is differentiable end to end and trains the generator
across episodes.
"""

__version__ = "0.1.0"
