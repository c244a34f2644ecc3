"""Supply-chain tracing ledger with batch-based publication."""

__version__ = "0.1.0"
