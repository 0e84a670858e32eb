"""Flat key = value config files.

One assignment per line, '#' starts a comment, blank lines ignored. Values
stay strings; the consumer coerces them (the CLI routes known run options to
RunConfig fields and everything else to problem parameters).
"""


def read_flat_config(path):
    values = {}
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep or not key.strip():
                raise ValueError(
                    f"bad config line {line_no} in {path!r}: {raw.strip()!r}")
            values[key.strip()] = val.strip()
    return values
