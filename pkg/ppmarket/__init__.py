"""
ppmarket: a deterministic blockchain-mediated AI marketplace.

Data owners, cloud owners and model owners train models by federated learning
while a hash-chained ledger records the commitments that make data
distribution, training rounds and fraud verifiable. A network simulator
reproduces throughput and latency trends of the ledger pipeline.
"""

__version__ = "0.1.0"
