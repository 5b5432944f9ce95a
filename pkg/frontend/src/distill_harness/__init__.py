"""Training harness for the encrypted inference engine."""
