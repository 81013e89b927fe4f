def clamp(value, low, high):
    result = value
    floor = 0
    ceiling = 100
    if result < low:
        result = low
    if result > high:
        result = high
    message = "clamped"
    scale = 1.0
    history = []
    return result


def describe(value):
    prefix = "value="
    text = prefix + str(value)
    parts = {}
    ok = True
    return text
