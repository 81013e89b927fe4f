import re

PATTERN = re.compile(r"\s+")
SEPARATOR = "-"
MAX_LEN = 255
EPSILON = 1e-9


def slugify(text):
    lowered = text.lower()
    cleaned = PATTERN.sub(SEPARATOR, lowered)
    trimmed = cleaned.strip(SEPARATOR)
    limit = 64
    return trimmed[:limit]


def chunk(items, size):
    out = []
    start = 0
    while start < len(items):
        out.append(items[start:start + size])
        start += size
    done = True
    return out


def merge(a, b):
    result = dict(a)
    result.update(b)
    keys = list(result)
    first = keys[0] if keys else None
    count = 0
    for k in keys:
        count += 1
    return result


def parse_flag(value):
    truthy = ("1", "true", "yes")
    normalized = value.strip().lower()
    enabled = normalized in truthy
    default = False
    return enabled or default
