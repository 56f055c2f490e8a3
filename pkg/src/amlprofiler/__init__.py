"""Customer-profiling pipeline for anti-money-laundering screening.

Stages: ingest a transaction ledger, aggregate per-customer behavioral
profiles, cluster them with mixed-attribute k-means, pick the cluster count
with a battery of validity metrics, induce classification rules from the
cluster labels, and export those rules as a knowledge base for screening
agents.
"""

__version__ = "0.1.0"
