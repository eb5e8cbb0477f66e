"""The twelve-point acceptance gate, one test per criterion.

Each test prints its own PASS/FAIL line with the measured detail.  The slow
criteria (4 and 11) run at full scale here; expect a wall-clock in the tens of
minutes for the whole module.
"""

import pytest

from gfflab import acceptance as acc


def _check(number, fn, fast=False):
    import time
    t0 = time.time()
    passed, detail = fn(fast=fast)
    line = f"{'PASS' if passed else 'FAIL'} [{number:2d}] {detail} ({time.time() - t0:.1f}s)"
    print(line)
    assert passed, line


def test_criterion_01_arcsin_identity():
    _check(1, acc.criterion_1_arcsin)


def test_criterion_02_capacity_consistency():
    _check(2, acc.criterion_2_capacity_consistency)


def test_criterion_03_ball_capacity_scaling():
    _check(3, acc.criterion_3_ball_capacity_scaling)


def test_criterion_04_one_arm_exponent():
    _check(4, acc.criterion_4_one_arm)


def test_criterion_05_loop_count_laws():
    _check(5, acc.criterion_5_loop_count_laws)


def test_criterion_06_restriction_property():
    _check(6, acc.criterion_6_restriction)


def test_criterion_07_crossing_mass_oracle():
    _check(7, acc.criterion_7_crossing_mass)


def test_criterion_08_interlacement_vacancy():
    _check(8, acc.criterion_8_vacancy)


def test_criterion_09_obstacle_checker_exactness():
    _check(9, acc.criterion_9_obstacle_exactness)


def test_criterion_10_monotone_coupling():
    _check(10, acc.criterion_10_monotone_coupling)


def test_criterion_11_cluster_capacity_tail():
    _check(11, acc.criterion_11_capacity_tail)


def test_criterion_12_declared_non_reproducibles():
    _check(12, acc.criterion_12_declarations)
