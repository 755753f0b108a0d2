"""Experiment harness: config parsing, the experiment registry, CSV
emission with byte-stable formatting, and figure rendering."""
