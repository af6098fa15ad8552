"""
catlab - Continuous Adversarial Training Laboratory

Linear self-attention with a trainable embedding, embedding-space adversarial
training, closed-form optima and robust generalization bounds, all checked
against Monte Carlo and brute-force oracles.
"""

__version__ = "0.1.0"
