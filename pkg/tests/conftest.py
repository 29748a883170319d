import pytest

from crowdlocate.aggregation import meta_from_question_sets
from crowdlocate.corpus import load_reference_corpus
from crowdlocate.orchestrator import ExperimentConfig
from crowdlocate.questions import generate_all
from crowdlocate.simulator import (AnswerModel, PopulationModel, constant_accuracy,
                                   run_experiment)


@pytest.fixture(scope="session")
def ref_corpus():
    return load_reference_corpus()


@pytest.fixture(scope="session")
def question_sets(ref_corpus):
    return generate_all(ref_corpus)


@pytest.fixture(scope="session")
def qmeta(question_sets):
    return meta_from_question_sets(question_sets)


@pytest.fixture(scope="session")
def case_lines(ref_corpus):
    return {c.case_id: c.line_numbers() for c in ref_corpus.cases}


@pytest.fixture(scope="session")
def fault_lines(ref_corpus):
    return {c.case_id: set(c.fault_lines) for c in ref_corpus.cases}


@pytest.fixture(scope="session")
def perfect_run(ref_corpus):
    """Full K=20 reference experiment with a perfectly accurate crowd."""
    return run_experiment(
        ref_corpus, ExperimentConfig(replication_k=20), PopulationModel(),
        AnswerModel(accuracy=constant_accuracy(1.0), p_idk=0.0), seed=42)
