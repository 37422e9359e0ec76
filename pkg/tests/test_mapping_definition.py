"""
mapping_definition.py のユニットテスト
"""

import json
import unittest
import sys
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from exceptions import MappingDefinitionError
from grade_notation import GradeAdapter
from mapping_definition import (
    ElementTemplate,
    MappingLink,
    MappingRule,
    MappingTrace,
    TraceDirection,
    builtin_grade_mapping,
    builtin_umlad_mapping,
    dump_definition,
    dump_trace,
    load_definition,
    load_trace,
    validate_definition,
)
from umlad_notation import UmlAdapter


def _with_rule(rule_id: str, **changes: object):  # type: ignore[no-untyped-def]
    definition = builtin_grade_mapping()
    rules = tuple(replace(r, **changes) if r.id == rule_id else r for r in definition.rules)
    return replace(definition, rules=rules)


def _grade_report(definition):  # type: ignore[no-untyped-def]
    adapter = GradeAdapter()
    return validate_definition(definition, adapter.classes, adapter.references)


class TestBuiltinDefinitions(unittest.TestCase):
    """組み込み定義のテスト"""

    def test_builtin_definitions_are_valid(self) -> None:
        grade, uml = GradeAdapter(), UmlAdapter()
        self.assertTrue(validate_definition(builtin_grade_mapping(), grade.classes, grade.references).ok)
        self.assertTrue(validate_definition(builtin_umlad_mapping(), uml.classes, uml.references).ok)

    def test_grade_xor_groups(self) -> None:
        definition = builtin_grade_mapping()
        self.assertEqual(definition.group_of("trig-or"), definition.group_of("trig-none"))
        self.assertNotEqual(definition.group_of("trig-or"), definition.group_of("branch-or"))
        self.assertIsNone(definition.group_of("flow"))

    def test_task_rules(self) -> None:
        definition = builtin_grade_mapping()
        self.assertEqual(len(definition.rules_for("Task")), 6)
        trig_or = definition.rule("trig-or")
        self.assertEqual(trig_or.roles(), ["merge", "incoming", "task"])
        self.assertEqual(trig_or.entry, "merge")
        self.assertEqual(definition.rule("branch-and").exit, "fork")

    def test_source_classes_in_definition_order(self) -> None:
        self.assertEqual(
            builtin_grade_mapping().source_classes(),
            ["Task", "Start", "End", "Flow", "PerformerRef"]
        )


class TestValidateDefinition(unittest.TestCase):
    """validate_definition のテスト"""

    def test_unknown_class(self) -> None:
        report = _grade_report(_with_rule("start", source_class="Gateway"))
        self.assertIn("unknown-class", report.rules())
        self.assertIn("class-coverage", report.rules())

    def test_guard_attribute(self) -> None:
        report = _grade_report(_with_rule("trig-or", guard="colour=RED"))
        self.assertEqual(report.rules(), ["guard-attribute"])

    def test_guard_syntax(self) -> None:
        report = _grade_report(_with_rule("trig-or", guard="triggering="))
        self.assertEqual(report.rules(), ["guard-syntax"])

    def test_port_must_be_node_role(self) -> None:
        report = _grade_report(_with_rule("trig-or", entry="incoming"))
        self.assertEqual(report.rules(), ["port-role"])

    def test_role_changes_kind(self) -> None:
        rule = builtin_grade_mapping().rule("trig-and")
        produces = tuple(
            ElementTemplate("merge", "Join") if t.role == "join" else t for t in rule.produces
        )
        report = _grade_report(_with_rule("trig-and", produces=produces, entry="merge"))
        self.assertIn("role-kind", report.rules())

    def test_unresolvable_endpoint(self) -> None:
        rule = builtin_grade_mapping().rule("flow")
        template = replace(rule.produces[0], source="@owner.exit")
        report = _grade_report(_with_rule("flow", produces=(template,)))
        self.assertEqual(report.rules(), ["endpoint-expression"])

    def test_copy_to_unknown_attribute(self) -> None:
        rule = builtin_grade_mapping().rule("start")
        template = replace(rule.produces[0], copy={"performer": "name"})
        report = _grade_report(_with_rule("start", produces=(template,)))
        self.assertIn("copy-target", report.rules())
        self.assertIn("copy-source", report.rules())

    def test_xor_group_with_unknown_rule(self) -> None:
        definition = replace(builtin_grade_mapping(), xor_groups=(("trig-or", "trig-xor"),))
        self.assertEqual(_grade_report(definition).rules(), ["xor-group"])

    def test_duplicate_rule(self) -> None:
        definition = builtin_grade_mapping()
        definition = replace(definition, rules=definition.rules + (definition.rule("start"),))
        self.assertIn("duplicate-rule", _grade_report(definition).rules())


class TestDefinitionDocument(unittest.TestCase):
    """定義のJSON入出力"""

    def test_dump_then_load(self) -> None:
        definition = builtin_grade_mapping()
        self.assertEqual(load_definition(dump_definition(definition)), definition)

    def test_document_shape(self) -> None:
        data = json.loads(dump_definition(builtin_umlad_mapping()))
        self.assertEqual(data["source"], "uml-ad")
        self.assertEqual(data["xor"], [])
        action = data["rules"][0]
        self.assertEqual(action["class"], "Action")
        self.assertEqual(action["produces"][0]["copy"]["performer"], "@partition.performer")

    def test_malformed(self) -> None:
        with self.assertRaises(MappingDefinitionError):
            load_definition('{"source": "grade-bm"}')
        with self.assertRaises(MappingDefinitionError):
            load_definition("not json")


class TestMappingTrace(unittest.TestCase):
    """MappingTrace のテスト"""

    def setUp(self) -> None:
        self.trace = MappingTrace(
            TraceDirection.TO_NIBM,
            (
                MappingLink("t", "trig-or", ("t.m", "t.i", "t.t")),
                MappingLink("t", "branch-or", ("t.o", "t.d")),
                MappingLink("s", "start", ("s.s",), folded=("extra",)),
            ),
            "grade-bm",
            "nibm"
        )

    def test_sources_and_produced(self) -> None:
        self.assertEqual(self.trace.sources(), ["t", "s"])
        self.assertEqual(self.trace.produced_by("t"), ["t.m", "t.i", "t.t", "t.o", "t.d"])
        self.assertEqual(len(self.trace.links_for("t")), 2)

    def test_remap(self) -> None:
        remapped = self.trace.remap_produced({"t.t": "n2"}).remap_sources({"s": "start-1"})
        self.assertEqual(remapped.links[0].produced, ("t.m", "t.i", "n2"))
        self.assertEqual(remapped.links[2].source, "start-1")
        self.assertEqual(remapped.links[2].folded, ("extra",))

    def test_dump_then_load(self) -> None:
        self.assertEqual(load_trace(dump_trace(self.trace)), self.trace)

    def test_compact_link_keys(self) -> None:
        data = json.loads(dump_trace(self.trace))
        self.assertEqual(data["links"][0], {"src": "t", "rule": "trig-or", "out": ["t.m", "t.i", "t.t"]})
        self.assertEqual(data["links"][2]["folded"], ["extra"])

    def test_malformed_trace(self) -> None:
        with self.assertRaises(MappingDefinitionError):
            load_trace('{"direction": "sideways", "links": []}')


if __name__ == "__main__":
    unittest.main()
