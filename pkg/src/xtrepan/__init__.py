"""Decision-tree extraction from trained feed-forward networks, with a C4.5 baseline."""

__version__ = "0.1.0"
