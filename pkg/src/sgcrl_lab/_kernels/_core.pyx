# Compiled mirrors of the numpy kernels in _numpy.py. Semantics must match
# exactly: accumulated slot gradients, single normalization of touched rows,
# one uniform variate consumed per potential rollout step.
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

BACKEND = "cython"


cdef void _column_softmax(double[:, ::1] logits, double[:, ::1] p, bint forward) noexcept nogil:
    cdef Py_ssize_t n = logits.shape[0]
    cdef Py_ssize_t i, j
    cdef double m, denom
    if forward:
        for i in range(n):
            m = logits[i, 0]
            for j in range(1, n):
                if logits[i, j] > m:
                    m = logits[i, j]
            denom = 0.0
            for j in range(n):
                p[i, j] = exp(logits[i, j] - m)
                denom += p[i, j]
            for j in range(n):
                p[i, j] /= denom
    else:
        for j in range(n):
            m = logits[0, j]
            for i in range(1, n):
                if logits[i, j] > m:
                    m = logits[i, j]
            denom = 0.0
            for i in range(n):
                p[i, j] = exp(logits[i, j] - m)
                denom += p[i, j]
            for i in range(n):
                p[i, j] /= denom


def infonce_batch_update(
    double[:, ::1] vectors,
    cnp.int64_t[:] anchors,
    cnp.int64_t[:] futures,
    double eta,
    bint forward=False,
    bint anchor_stop_gradient=False,
    bint normalize=True,
):
    cdef Py_ssize_t n = anchors.shape[0]
    cdef Py_ssize_t num_states = vectors.shape[0]
    cdef Py_ssize_t d = vectors.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] logits_arr = np.empty((n, n))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p_arr = np.empty((n, n))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] field_arr = np.zeros((num_states, d))
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] touched_arr = np.zeros(num_states, dtype=np.uint8)
    cdef double[:, ::1] logits = logits_arr
    cdef double[:, ::1] p = p_arr
    cdef double[:, ::1] field = field_arr
    cdef cnp.uint8_t[:] touched = touched_arr
    cdef Py_ssize_t i, j, k, s
    cdef double acc, coef, norm

    with nogil:
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for k in range(d):
                    acc += vectors[anchors[i], k] * vectors[futures[j], k]
                logits[i, j] = acc
        _column_softmax(logits, p, forward)

        if not anchor_stop_gradient:
            for i in range(n):
                s = anchors[i]
                touched[s] = 1
                for j in range(n):
                    coef = (1.0 if i == j else 0.0) - p[i, j]
                    for k in range(d):
                        field[s, k] += coef * vectors[futures[j], k]
        for j in range(n):
            s = futures[j]
            touched[s] = 1
            for i in range(n):
                coef = (1.0 if i == j else 0.0) - p[i, j]
                for k in range(d):
                    field[s, k] += coef * vectors[anchors[i], k]
        if anchor_stop_gradient:
            for i in range(n):
                touched[anchors[i]] = 1

        for s in range(num_states):
            if touched[s]:
                for k in range(d):
                    vectors[s, k] += eta * field[s, k]
                if normalize:
                    norm = 0.0
                    for k in range(d):
                        norm += vectors[s, k] * vectors[s, k]
                    norm = sqrt(norm)
                    for k in range(d):
                        vectors[s, k] /= norm


def scalar_batch_update(
    double[:, ::1] sims,
    cnp.int64_t[:] anchors,
    cnp.int64_t[:] futures,
    double eta,
):
    cdef Py_ssize_t n = anchors.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] logits_arr = np.empty((n, n))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p_arr = np.empty((n, n))
    cdef double[:, ::1] logits = logits_arr
    cdef double[:, ::1] p = p_arr
    cdef Py_ssize_t i, j

    with nogil:
        for i in range(n):
            for j in range(n):
                logits[i, j] = sims[anchors[i], futures[j]]
        _column_softmax(logits, p, False)
        for i in range(n):
            for j in range(n):
                sims[anchors[i], futures[j]] += eta * ((1.0 if i == j else 0.0) - p[i, j])


def rollout(
    cnp.int64_t[:, ::1] transition,
    double[:, ::1] vectors,
    double[:] goal_vec,
    Py_ssize_t start,
    Py_ssize_t goal,
    double tau,
    Py_ssize_t max_steps,
    bint terminate_on_goal,
    double[:] uniforms,
):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] states_arr = np.empty(max_steps + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] actions_arr = np.empty(max(max_steps, 1), dtype=np.int64)
    cdef cnp.int64_t[:] states = states_arr
    cdef cnp.int64_t[:] actions = actions_arr
    cdef Py_ssize_t num_actions = transition.shape[1]
    cdef Py_ssize_t d = vectors.shape[1]
    cdef Py_ssize_t s = start
    cdef Py_ssize_t t = 0, a, k, steps_taken = 0
    cdef double m, total, target, acc
    cdef double logit_buf[64]
    cdef bint success = False

    if num_actions > 64:
        raise ValueError("rollout kernel supports at most 64 actions")

    states[0] = s
    if terminate_on_goal and s == goal:
        return states_arr[:1], actions_arr[:0], True

    with nogil:
        for t in range(max_steps):
            m = -1e300
            for a in range(num_actions):
                acc = 0.0
                for k in range(d):
                    acc += vectors[transition[s, a], k] * goal_vec[k]
                logit_buf[a] = acc / tau
                if logit_buf[a] > m:
                    m = logit_buf[a]
            total = 0.0
            for a in range(num_actions):
                logit_buf[a] = exp(logit_buf[a] - m)
                total += logit_buf[a]
            target = uniforms[t] * total
            acc = 0.0
            a = num_actions - 1
            for k in range(num_actions):
                acc += logit_buf[k]
                if acc > target:
                    a = k
                    break
            s = transition[s, a]
            actions[t] = a
            states[t + 1] = s
            steps_taken = t + 1
            if s == goal:
                success = True
                if terminate_on_goal:
                    break

    return states_arr[: steps_taken + 1], actions_arr[:steps_taken], bool(success)
