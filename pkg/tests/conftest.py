"""Shared fixtures: hand-built manifests and the randomized corpus."""

import random

import pytest

from fairbalance import GroupSet, ImageRecord, Manifest, SynthConfig, generate

ACCEPTANCE_RESULTS = []


def record_criterion(number, label, passed, detail):
    """Collect one acceptance line; the terminal summary replays them."""
    ACCEPTANCE_RESULTS.append((number, label, passed, detail))
    print(f"criterion {number} ({label}): {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, label, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(
            f"criterion {number} ({label}): {status} - {detail}"
        )


def build_manifest(labels, rows):
    """Build a manifest from (image_id, identity_id, group_index, scores)."""
    groups = GroupSet(tuple(labels))
    images = [ImageRecord(r[0], r[1], r[2], tuple(r[3])) for r in rows]
    return Manifest.from_images(groups, images)


def two_group_fixture():
    """The hand-checkable two-group example used across sampling tests.

    Group g1 holds identities with own-group image scores 0.9 and 0.6,
    group g2 holds 0.95 and 0.94, one image each. Under a mean protocol
    diag is (0.75, 0.945), so the first removal takes the 0.6 identity.
    """
    return build_manifest(
        ("g1", "g2"),
        [
            ("i1", "a", 0, (0.9, 0.1)),
            ("i2", "b", 0, (0.6, 0.4)),
            ("i3", "c", 1, (0.05, 0.95)),
            ("i4", "d", 1, (0.06, 0.94)),
        ],
    )


@pytest.fixture
def two_groups():
    return two_group_fixture()


def corpus_configs(count=200, master_seed=20240917):
    """Deterministic spread of synthetic configs for oracle comparisons.

    Dimensions d in {2, 3, 4}, total identities 8 to 60, image counts 1 to
    10, balanced and skewed group sizes, occasional label noise.
    """
    picker = random.Random(master_seed)
    configs = []
    for index in range(count):
        d = picker.choice((2, 3, 4))
        labels = tuple(f"g{k}" for k in range(1, d + 1))
        total_target = picker.randint(8, 60)
        base = max(2, total_target // d)
        counts = []
        for _ in range(d):
            jitter = picker.randint(-base // 2, base // 2) if base > 3 else 0
            counts.append(max(2, base + jitter))
        img_lo = picker.randint(1, 5)
        img_hi = picker.randint(img_lo, 10)
        concentration = tuple(
            picker.choice((0.4, 1.0, 2.5, 6.0, 15.0)) for _ in range(d)
        )
        noise = picker.choice((0.0, 0.0, 0.1, 0.3))
        configs.append(
            SynthConfig(
                seed=master_seed + index,
                groups=GroupSet(labels),
                identities_per_group=tuple(counts),
                images_per_identity=(img_lo, img_hi),
                concentration=concentration,
                label_noise=noise,
            )
        )
    return configs


def tie_heavy_manifests():
    """Handcrafted manifests where score ties force the tie-break rules.

    The first has identical score vectors within each group, so every
    victim choice is a tie on identity score. The second mirrors one
    group's scores onto another, so the diagonal entries tie as well.
    """
    flat = build_manifest(
        ("g1", "g2"),
        [
            (f"f{i}", f"fa{i}", 0, (0.6, 0.4)) for i in range(4)
        ]
        + [
            (f"s{i}", f"sb{i}", 1, (0.3, 0.7)) for i in range(5)
        ],
    )
    mirrored = build_manifest(
        ("g1", "g2", "g3"),
        [
            ("m1", "x1", 0, (0.8, 0.1, 0.1)),
            ("m2", "x2", 0, (0.5, 0.25, 0.25)),
            ("m3", "y1", 1, (0.1, 0.8, 0.1)),
            ("m4", "y2", 1, (0.25, 0.5, 0.25)),
            ("m5", "z1", 2, (0.05, 0.05, 0.9)),
            ("m6", "z2", 2, (0.15, 0.15, 0.7)),
            ("m7", "z3", 2, (0.1, 0.1, 0.8)),
        ],
    )
    return [flat, mirrored]


@pytest.fixture(scope="session")
def corpus():
    """Generated manifests plus the tie-heavy handcrafted ones."""
    manifests = [generate(cfg) for cfg in corpus_configs()]
    manifests.extend(tie_heavy_manifests())
    return manifests


@pytest.fixture(scope="session")
def small_corpus(corpus):
    """A cheap slice for property tests that replay sampling per manifest."""
    return corpus[:40]
