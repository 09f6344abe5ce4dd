import unittest
from typing import Any, List

from night_restore import Response, Status
from night_restore.strategies import RangeValidationStrategy
from night_restore.value import (
    ConstrainedValue,
    PipeLineStrategy,
    TransformationStrategy,
    ValidationStrategy,
    run_pipeline,
)


class Exposure(ConstrainedValue[float]):
    def get_strategies(self) -> List[PipeLineStrategy]:
        return [RangeValidationStrategy(0.05, 0.3)]


class Halve(TransformationStrategy[float, float]):
    def transform(self, value: float) -> Response[float]:
        return Response(status=Status.OK, details="halved", value=value / 2.0)


class TestRunPipeline(unittest.TestCase):
    def test_transformations_chain_in_order(self):
        result = run_pipeline([Halve(), Halve()], 1.0)
        self.assertEqual(result.status, Status.OK)
        self.assertEqual(result.value, 0.25, "Two halvings should quarter the value")

    def test_pipeline_stops_at_first_exception(self):
        class Boom(ValidationStrategy[Any]):
            def validate(self, value):
                raise AssertionError("must not be reached")

        result = run_pipeline([RangeValidationStrategy(0, 1), Boom()], 5)
        self.assertEqual(result.status, Status.EXCEPTION)
        self.assertIsNone(result.value)
        self.assertEqual(result.details, "Value must be less than or equal to 1, got 5")

    def test_success_details_are_reported(self):
        result = run_pipeline([], 3, success_details="fine")
        self.assertEqual(result.details, "fine")
        self.assertEqual(result.value, 3)

    def test_unknown_strategy_type_is_an_exception(self):
        class Stray(PipeLineStrategy):
            pass

        result = run_pipeline([Stray()], 1)
        self.assertEqual(result.status, Status.EXCEPTION)
        self.assertEqual(result.details, "Missing strategy handler")


class TestConstrainedValue(unittest.TestCase):
    def test_valid_value_is_ok(self):
        e = Exposure(0.2)
        self.assertTrue(e.ok)
        self.assertEqual(e.value, 0.2)
        self.assertEqual(e.unwrap(), 0.2)

    def test_invalid_value_never_raises_at_construction(self):
        e = Exposure(0.7)
        self.assertFalse(e.ok)
        self.assertIsNone(e.value, "Value should be None when validation fails")
        self.assertEqual(e.details, "Value must be less than or equal to 0.3, got 0.7")

    def test_unwrap_on_invalid_raises_valueerror(self):
        with self.assertRaises(ValueError):
            Exposure(0.01).unwrap()

    def test_repr_includes_status(self):
        self.assertEqual(repr(Exposure(0.1)), "Exposure(_value=0.1, status=OK)")

    def test_is_read_only(self):
        e = Exposure(0.1)
        with self.assertRaises(AttributeError):
            e._value = 0.2
        with self.assertRaises(AttributeError):
            e.extra = 1
        self.assertEqual(e.value, 0.1)


if __name__ == "__main__":
    unittest.main()
