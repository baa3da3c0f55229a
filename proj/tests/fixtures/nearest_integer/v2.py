import sys

data = sys.stdin.read().split()
X, N = int(data[0]), int(data[1])
p = set(map(int, data[2:2 + N]))
d = 0
while True:
    for c in (X - d, X + d):
        if c >= 0 and c not in p:
            print(c)
            sys.exit()
    d += 1
