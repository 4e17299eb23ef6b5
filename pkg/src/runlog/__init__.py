"""runlog: bookkeeping for accelerator data taking.

Run catalogue, operations logbook, processing lineage, an audited durable
store, a self-describing REST API, reports, a deterministic workload
simulator and an operator CLI.
"""

__version__ = "0.1.0"
