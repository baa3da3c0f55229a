import sys

data = sys.stdin.read().split()
X, N = int(data[0]), int(data[1])
p = set(map(int, data[2:2 + N]))
c = X
while c in p:
    c += 1
print(c)
