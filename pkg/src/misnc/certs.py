from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    violations: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail,
                "violations": [str(v) for v in self.violations]}


@dataclass
class CertificateReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, name: str, violations: list, detail: str = "") -> Check:
        check = Check(name, not violations, detail, list(violations))
        self.checks.append(check)
        return check

    def as_list(self) -> list[dict]:
        return [c.as_dict() for c in self.checks]

    def summary(self) -> str:
        return "\n".join(
            f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}"
            + "".join(f"\n      {v}" for v in c.violations[:5])
            for c in self.checks)
