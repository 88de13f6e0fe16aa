"""Scalar, loop-based BBOB reference written straight from the function definitions.

Shares nothing with the vectorized suite except the instance parameters
(x_opt, f_opt, rotations, signs, Gallagher peaks), which are read from the
problem object.  Used as a test oracle only.
"""

import math


def matvec(M, v):
    return [sum(M[i][j] * v[j] for j in range(len(v))) for i in range(len(M))]


def tosz(v):
    out = []
    for x in v:
        if x == 0:
            out.append(0.0)
            continue
        xh = math.log(abs(x))
        c1, c2 = (10.0, 7.9) if x > 0 else (5.5, 3.1)
        out.append(math.copysign(1.0, x) * math.exp(xh + 0.049 * (math.sin(c1 * xh) + math.sin(c2 * xh))))
    return out


def tosz1(x):
    return tosz([x])[0]


def tasy(v, beta):
    D = len(v)
    return [x ** (1 + beta * i / (D - 1) * math.sqrt(x)) if x > 0 else x for i, x in enumerate(v)]


def lam_diag(alpha, D):
    return [alpha ** (0.5 * i / (D - 1)) for i in range(D)]


def scale(d, v):
    return [a * b for a, b in zip(d, v)]


def fpen(v):
    return sum(max(0.0, abs(x) - 5.0) ** 2 for x in v)


def rastrigin(z):
    D = len(z)
    return 10.0 * (D - sum(math.cos(2 * math.pi * t) for t in z)) + sum(t * t for t in z)


def rosenbrock(z):
    return sum(100.0 * (z[i] ** 2 - z[i + 1]) ** 2 + (z[i] - 1.0) ** 2 for i in range(len(z) - 1))


def reference(fid, x, P, x_opt, f_opt):
    """f(x) for BBOB function ``fid`` with instance parameters ``P``."""
    x = [float(t) for t in x]
    xo = [float(t) for t in x_opt]
    D = len(x)
    d = [a - b for a, b in zip(x, xo)]
    R = P.get("R")
    Q = P.get("Q")
    R = None if R is None else R.tolist()
    Q = None if Q is None else Q.tolist()

    if fid == 1:
        f = sum(t * t for t in d)
    elif fid == 2:
        z = tosz(d)
        f = sum(10 ** (6 * i / (D - 1)) * z[i] ** 2 for i in range(D))
    elif fid == 3:
        z = scale(lam_diag(10, D), tasy(tosz(d), 0.2))
        f = rastrigin(z)
    elif fid == 4:
        z = tosz(d)
        s = []
        for i in range(D):
            si = 10 ** (0.5 * i / (D - 1))
            if z[i] > 0 and (i + 1) % 2 == 1:
                si *= 10
            s.append(si)
        f = rastrigin(scale(s, z)) + 100 * fpen(x)
    elif fid == 5:
        f = 0.0
        for i in range(D):
            zi = x[i] if xo[i] * x[i] < 25 else xo[i]
            si = math.copysign(1.0, xo[i]) * 10 ** (i / (D - 1))
            f += 5 * abs(si) - si * zi
    elif fid == 6:
        z = matvec(Q, scale(lam_diag(10, D), matvec(R, d)))
        f = tosz1(sum(((100.0 if z[i] * xo[i] > 0 else 1.0) * z[i]) ** 2 for i in range(D))) ** 0.9
    elif fid == 7:
        zh = scale(lam_diag(10, D), matvec(R, d))
        zt = [math.floor(0.5 + t) if abs(t) > 0.5 else math.floor(0.5 + 10 * t) / 10 for t in zh]
        z = matvec(Q, zt)
        core = sum(10 ** (2 * i / (D - 1)) * z[i] ** 2 for i in range(D))
        f = 0.1 * max(abs(zh[0]) / 1e4, core) + fpen(x)
    elif fid == 8:
        c = max(1.0, math.sqrt(D) / 8)
        f = rosenbrock([c * t + 1 for t in d])
    elif fid == 9:
        c = max(1.0, math.sqrt(D) / 8)
        f = rosenbrock([c * t + 0.5 for t in matvec(R, x)])
    elif fid == 10:
        z = tosz(matvec(R, d))
        f = sum(10 ** (6 * i / (D - 1)) * z[i] ** 2 for i in range(D))
    elif fid == 11:
        z = tosz(matvec(R, d))
        f = 1e6 * z[0] ** 2 + sum(t * t for t in z[1:])
    elif fid == 12:
        z = matvec(R, tasy(matvec(R, d), 0.5))
        f = z[0] ** 2 + 1e6 * sum(t * t for t in z[1:])
    elif fid == 13:
        z = matvec(Q, scale(lam_diag(10, D), matvec(R, d)))
        f = z[0] ** 2 + 100 * math.sqrt(sum(t * t for t in z[1:]))
    elif fid == 14:
        z = matvec(R, d)
        f = math.sqrt(sum(abs(z[i]) ** (2 + 4 * i / (D - 1)) for i in range(D)))
    elif fid == 15:
        z = matvec(R, scale(lam_diag(10, D), matvec(Q, tasy(tosz(matvec(R, d)), 0.2))))
        f = rastrigin(z)
    elif fid == 16:
        z = matvec(R, scale(lam_diag(0.01, D), matvec(Q, tosz(matvec(R, d)))))
        f0 = sum(0.5 ** k * math.cos(math.pi * 3 ** k) for k in range(12))
        acc = 0.0
        for zi in z:
            acc += sum(0.5 ** k * math.cos(2 * math.pi * 3 ** k * (zi + 0.5)) for k in range(12))
        f = 10 * (acc / D - f0) ** 3 + 10 / D * fpen(x)
    elif fid in (17, 18):
        alpha = 10 if fid == 17 else 1000
        z = scale(lam_diag(alpha, D), matvec(Q, tasy(matvec(R, d), 0.5)))
        acc = 0.0
        for i in range(D - 1):
            s = math.sqrt(z[i] ** 2 + z[i + 1] ** 2)
            acc += math.sqrt(s) + math.sqrt(s) * math.sin(50 * s ** 0.2) ** 2
        f = (acc / (D - 1)) ** 2 + 10 * fpen(x)
    elif fid == 19:
        c = max(1.0, math.sqrt(D) / 8)
        z = [c * t + 0.5 for t in matvec(R, x)]
        acc = 0.0
        for i in range(D - 1):
            s = 100 * (z[i] ** 2 - z[i + 1]) ** 2 + (z[i] - 1) ** 2
            acc += s / 4000 - math.cos(s)
        f = 10 / (D - 1) * acc + 10
    elif fid == 20:
        sg = P["signs"].tolist()
        xh = [2 * sg[i] * x[i] for i in range(D)]
        zh = [xh[0]] + [xh[i] + 0.25 * (xh[i - 1] - 2 * abs(xo[i - 1])) for i in range(1, D)]
        L = lam_diag(10, D)
        z = [100 * (L[i] * (zh[i] - 2 * abs(xo[i])) + 2 * abs(xo[i])) for i in range(D)]
        f = (-sum(t * math.sin(math.sqrt(abs(t))) for t in z) / (100 * D)
             + 4.189828872724339 + 100 * fpen([t / 100 for t in z]))
    elif fid in (21, 22):
        Y, C, w = P["peaks"].tolist(), P["peak_scales"].tolist(), P["weights"].tolist()
        best = -math.inf
        for k in range(len(w)):
            r = matvec(R, [x[i] - Y[k][i] for i in range(D)])
            q = sum(C[k][i] * r[i] ** 2 for i in range(D))
            best = max(best, w[k] * math.exp(-q / (2 * D)))
        f = tosz1(10 - best) ** 2 + fpen(x)
    elif fid == 23:
        z = matvec(Q, scale(lam_diag(100, D), matvec(R, d)))
        prod = 1.0
        for i in range(D):
            inner = sum(abs(2 ** j * z[i] - round(2 ** j * z[i])) / 2 ** j for j in range(1, 33))
            prod *= (1 + (i + 1) * inner) ** (10 / D ** 1.2)
        f = 10 / D ** 2 * prod - 10 / D ** 2 + fpen(x)
    elif fid == 24:
        mu0, dd = 2.5, 1.0
        s = 1 - 1 / (2 * math.sqrt(D + 20) - 8.2)
        mu1 = -math.sqrt((mu0 ** 2 - dd) / s)
        xh = [2 * math.copysign(1.0, xo[i]) * x[i] for i in range(D)]
        z = matvec(Q, scale(lam_diag(100, D), matvec(R, [t - mu0 for t in xh])))
        left = sum((t - mu0) ** 2 for t in xh)
        right = dd * D + s * sum((t - mu1) ** 2 for t in xh)
        f = min(left, right) + 10 * (D - sum(math.cos(2 * math.pi * t) for t in z)) + 1e4 * fpen(x)
    else:
        raise ValueError(fid)
    return f + f_opt
