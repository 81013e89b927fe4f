import json


class User:
    kind = "user"
    limit = 10

    def __init__(self, name, age):
        self.name = name
        self.age = age
        active = True
        score = 0.0
        tags = []
        meta = {}
        pair = (name, age)

    def to_json(self):
        payload = {"name": self.name, "age": self.age}
        encoded = json.dumps(payload)
        size = len(encoded)
        return encoded


def load_users(rows):
    users = []
    total = 0
    for row in rows:
        name = row[0]
        age = int(row[1])
        users.append(User(name, age))
        total = total + 1
    average = 0.0
    label = "users"
    return users


def summary(users):
    names = [u.name for u in users]
    count = len(names)
    joined = ", ".join(names)
    empty = count == 0
    ratio = 1.5
    return joined
