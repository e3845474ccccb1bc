import datetime as dt

import pytest

from gridsched import Calendar, parse_instance

SAMPLE_TEXT = """ppoi 3 2 1 4 2
b 0 1 2
b 1 1 0
b 2 0 1
s 0 0
s 1 2
c 0 5 2 0.87
r 0 1 L 15 8 1 2
r 1 2 S 8 12 0
r 2 2 L 10 4 0
r 3 1 S 4 4 0
a 0 2 S 8 12 500 100 0
a 1 2 L 8 16 2000 1500 1 0
"""


@pytest.fixture
def sample_text() -> str:
    return SAMPLE_TEXT


@pytest.fixture
def sample_instance():
    return parse_instance(SAMPLE_TEXT)


@pytest.fixture
def week_calendar() -> Calendar:
    # one working week, Monday through Sunday
    return Calendar.from_start(dt.date(2020, 11, 2), 7)


@pytest.fixture
def day_calendar() -> Calendar:
    # a single Monday
    return Calendar.from_start(dt.date(2020, 11, 2), 1)


@pytest.fixture
def november() -> Calendar:
    return Calendar.for_month(2020, 11)
