import pytest

from querylens.domain import MemberProfile, ProfileLocation
from querylens.gateway import MockBackend, default_mock_script
from querylens.taxonomy import default_taxonomy


@pytest.fixture(scope="session")
def taxonomy():
    return default_taxonomy()


@pytest.fixture()
def bay_area_profile():
    return MemberProfile(
        location=ProfileLocation(city="Bay Area", region="CA", country="US"),
        titles=("Software Engineer", "Backend Engineer"),
        skills=("Python", "Kubernetes", "distributed systems", "SQL"),
        industries=("ind:software",),
        education=("BS Computer Science",),
        years_experience=7,
        network_company_ids=("co:acme", "co:globex"),
    )


@pytest.fixture()
def italian_profile():
    return MemberProfile(
        location=ProfileLocation(city="Rome", region=None, country="IT"),
        titles=("Product Manager",),
        skills=("Roadmapping",),
    )


@pytest.fixture()
def mock_backend():
    return MockBackend(default_mock_script())
